#pragma once

namespace paccs {

/// Probe outputs for one pair: p(x+), p(x-), p(xbar+), p(xbar-).
struct ScoreQuadruple {
    double p_plus = 0.0;
    double p_minus = 0.0;
    double pbar_plus = 0.0;
    double pbar_minus = 0.0;

    bool operator==(const ScoreQuadruple&) const = default;
};

/// Throws DomainError unless every component lies in [0, 1].
void check_quadruple(const ScoreQuadruple& q);

}  // namespace paccs
