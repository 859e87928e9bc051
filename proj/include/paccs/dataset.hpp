#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace paccs {

enum class Label : int { harmful = 0, safe = 1 };

struct Statement {
    std::int64_t id = 0;
    std::string text;
    Label label = Label::harmful;

    bool operator==(const Statement&) const = default;
};

enum class PairType { antagonistic, concurrent, mixed };

const char* to_string(PairType type) noexcept;
PairType parse_pair_type(std::string_view text);

/// Harmful/safe statement pairs. Statements are kept in ascending id order and
/// the statement at rank i is paired with the one at rank i + N/2. Which
/// polarity occupies the first half is read from the labels.
class PairDataset {
public:
    /// Sorts by id and validates every pairing invariant; throws ValidationError.
    PairDataset(std::vector<Statement> statements, PairType pair_type, std::string name);

    const std::vector<Statement>& statements() const noexcept { return statements_; }
    PairType pair_type() const noexcept { return pair_type_; }
    const std::string& name() const noexcept { return name_; }

    std::size_t size() const noexcept { return statements_.size(); }
    std::size_t n_pairs() const noexcept { return statements_.size() / 2; }

    Label first_half_label() const noexcept { return statements_.front().label; }
    const Statement& safe(std::size_t pair) const;
    const Statement& harmful(std::size_t pair) const;

    bool operator==(const PairDataset&) const = default;

private:
    std::vector<Statement> statements_;
    PairType pair_type_;
    std::string name_;
};

enum class DatasetFormat { csv, jsonl };

DatasetFormat format_from_path(const std::filesystem::path& path);

PairDataset load_pair_dataset(const std::filesystem::path& path, DatasetFormat format,
                              PairType pair_type = PairType::mixed);
PairDataset load_pair_dataset(const std::filesystem::path& path);

PairDataset parse_pair_dataset(std::string_view text, DatasetFormat format, PairType pair_type,
                               std::string name);

/// Canonical JSONL: one compact object per line, keys sorted
/// ({"id":..,"label":..,"statement":..}), UTF-8 unescaped, '\n' after every line.
std::string to_canonical_jsonl(const PairDataset& ds);
std::string to_csv(const PairDataset& ds);
void save_pair_dataset(const PairDataset& ds, const std::filesystem::path& path, DatasetFormat format);

/// Hex SHA-256 of to_canonical_jsonl(ds); ties activation archives to their statements.
std::string dataset_fingerprint(const PairDataset& ds);

struct ContrastQuad {
    std::string safe_yes;     // A+
    std::string safe_no;      // A-
    std::string harmful_yes;  // Abar+
    std::string harmful_no;   // Abar-
};

struct ContrastInputs {
    std::vector<ContrastQuad> pairs;
    std::string suffix_yes;
    std::string suffix_no;
    std::vector<std::string> warnings;
};

inline constexpr std::string_view default_suffix_yes = " Yes";
inline constexpr std::string_view default_suffix_no = " No";

ContrastInputs build_contrast_inputs(const PairDataset& ds,
                                     std::string_view suffix_yes = default_suffix_yes,
                                     std::string_view suffix_no = default_suffix_no);

/// Whole-word, ASCII case-insensitive search. Word characters are ASCII
/// alphanumerics and any byte >= 0x80 (so UTF-8 letters never split a word).
std::size_t count_word_occurrences(std::string_view text, std::string_view word);
bool contains_word(std::string_view text, std::string_view word);

struct SubstitutionResult {
    PairDataset dataset;
    std::size_t substitutions = 0;
};

/// Replaces every whole-word occurrence of `target` with `replacement` verbatim.
SubstitutionResult substitute_polarity_token(const PairDataset& ds, std::string_view target,
                                             std::string_view replacement);
std::string substitute_word(std::string_view text, std::string_view target,
                            std::string_view replacement, std::size_t* count = nullptr);

struct DatasetStats {
    std::size_t n_total = 0;
    std::size_t n_pairs = 0;
    double frac_token_harm = 0.0;
    double frac_token_safe = 0.0;
};

DatasetStats dataset_stats(const PairDataset& ds, std::string_view token);

/// Control tokens used in place of the negation marker.
const std::vector<std::string>& default_control_tokens();

}  // namespace paccs
