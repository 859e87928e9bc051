#include "paccs/dataset.hpp"

#include "paccs/errors.hpp"
#include "paccs/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

namespace paccs {

using nlohmann::json;

const char* to_string(PairType type) noexcept {
    switch (type) {
        case PairType::antagonistic: return "antagonistic";
        case PairType::concurrent: return "concurrent";
        case PairType::mixed: return "mixed";
    }
    return "mixed";
}

PairType parse_pair_type(std::string_view text) {
    if (text == "antagonistic") return PairType::antagonistic;
    if (text == "concurrent") return PairType::concurrent;
    if (text == "mixed") return PairType::mixed;
    throw ConfigError("unknown pair type '" + std::string(text) + "'");
}

PairDataset::PairDataset(std::vector<Statement> statements, PairType pair_type, std::string name)
    : statements_(std::move(statements)), pair_type_(pair_type), name_(std::move(name)) {
    std::sort(statements_.begin(), statements_.end(),
              [](const Statement& a, const Statement& b) { return a.id < b.id; });

    if (statements_.empty()) throw ValidationError("dataset is empty: at least one pair is required");
    if (statements_.size() % 2 != 0) {
        throw ValidationError("even-count invariant violated: " + std::to_string(statements_.size()) +
                              " statements cannot be split into pairs");
    }
    for (std::size_t i = 0; i < statements_.size(); ++i) {
        const Statement& s = statements_[i];
        if (s.id < 0) throw ValidationError("id " + std::to_string(s.id) + " is negative");
        if (i > 0 && statements_[i - 1].id == s.id) {
            throw ValidationError("duplicate id " + std::to_string(s.id));
        }
        if (s.text.empty()) throw ValidationError("statement " + std::to_string(s.id) + " has empty text");
        if (s.label != Label::harmful && s.label != Label::safe) {
            throw ValidationError("statement " + std::to_string(s.id) + " has a label outside {0, 1}");
        }
    }

    const std::size_t half = statements_.size() / 2;
    const Label first = statements_.front().label;
    const Label second = statements_[half].label;
    for (std::size_t i = 0; i < half; ++i) {
        if (statements_[i].label != first) {
            throw ValidationError("half-homogeneity invariant violated: first half mixes labels (id " +
                                  std::to_string(statements_[i].id) + ")");
        }
        if (statements_[i + half].label != second) {
            throw ValidationError("half-homogeneity invariant violated: second half mixes labels (id " +
                                  std::to_string(statements_[i + half].id) + ")");
        }
    }
    if (first == second) {
        throw ValidationError("paired-opposites invariant violated: both halves carry label " +
                              std::to_string(static_cast<int>(first)));
    }
}

const Statement& PairDataset::safe(std::size_t pair) const {
    const std::size_t half = n_pairs();
    return first_half_label() == Label::safe ? statements_.at(pair) : statements_.at(pair + half);
}

const Statement& PairDataset::harmful(std::size_t pair) const {
    const std::size_t half = n_pairs();
    return first_half_label() == Label::harmful ? statements_.at(pair) : statements_.at(pair + half);
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return DatasetFormat::csv;
    if (ext == ".jsonl" || ext == ".json") return DatasetFormat::jsonl;
    throw ConfigError("cannot infer dataset format from '" + path.string() + "' (expected .csv or .jsonl)");
}

namespace {

Label label_from_int(std::int64_t v, std::size_t line) {
    if (v == 0) return Label::harmful;
    if (v == 1) return Label::safe;
    throw ParseError(line, "label must be 0 or 1, got " + std::to_string(v));
}

std::int64_t parse_int_field(const std::string& field, const char* name, std::size_t line) {
    std::int64_t v = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw ParseError(line, std::string(name) + " is not an integer: '" + field + "'");
    }
    return v;
}

std::vector<Statement> parse_jsonl(std::string_view text) {
    std::vector<Statement> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == text.size()) break;
            continue;
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "record is not a JSON object");
        for (const char* key : {"id", "statement", "label"}) {
            if (!obj.contains(key)) throw ParseError(line_no, std::string("missing field '") + key + "'");
        }
        if (!obj["id"].is_number_integer()) throw ParseError(line_no, "id must be an integer");
        if (!obj["statement"].is_string()) throw ParseError(line_no, "statement must be a string");
        if (!obj["label"].is_number_integer()) throw ParseError(line_no, "label must be 0 or 1");
        Statement s;
        s.id = obj["id"].get<std::int64_t>();
        if (s.id < 0) throw ParseError(line_no, "id must be non-negative");
        s.text = obj["statement"].get<std::string>();
        s.label = label_from_int(obj["label"].get<std::int64_t>(), line_no);
        out.push_back(std::move(s));
        if (end == text.size()) break;
    }
    return out;
}

std::vector<Statement> parse_csv_records(std::string_view text) {
    auto records = io::parse_csv(text);
    if (records.empty()) return {};
    const auto& header = records.front();
    int id_col = -1, text_col = -1, label_col = -1;
    for (std::size_t c = 0; c < header.fields.size(); ++c) {
        std::string name = header.fields[c];
        if (c == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
        if (name == "id") id_col = static_cast<int>(c);
        else if (name == "statement") text_col = static_cast<int>(c);
        else if (name == "label") label_col = static_cast<int>(c);
    }
    if (id_col < 0 || text_col < 0 || label_col < 0) {
        throw ParseError(header.line, "header must name columns id,statement,label");
    }
    std::vector<Statement> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.fields.size() != header.fields.size()) {
            throw ParseError(rec.line, "expected " + std::to_string(header.fields.size()) + " fields, got " +
                                           std::to_string(rec.fields.size()));
        }
        Statement s;
        s.id = parse_int_field(rec.fields[id_col], "id", rec.line);
        if (s.id < 0) throw ParseError(rec.line, "id must be non-negative");
        s.text = rec.fields[text_col];
        s.label = label_from_int(parse_int_field(rec.fields[label_col], "label", rec.line), rec.line);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

PairDataset parse_pair_dataset(std::string_view text, DatasetFormat format, PairType pair_type,
                               std::string name) {
    auto statements = format == DatasetFormat::csv ? parse_csv_records(text) : parse_jsonl(text);
    return PairDataset(std::move(statements), pair_type, std::move(name));
}

PairDataset load_pair_dataset(const std::filesystem::path& path, DatasetFormat format, PairType pair_type) {
    if (!std::filesystem::exists(path)) throw IoError("dataset file not found: " + path.string());
    return parse_pair_dataset(io::read_text_file(path), format, pair_type, path.stem().string());
}

PairDataset load_pair_dataset(const std::filesystem::path& path) {
    return load_pair_dataset(path, format_from_path(path));
}

std::string to_canonical_jsonl(const PairDataset& ds) {
    std::string out;
    for (const auto& s : ds.statements()) {
        json obj;
        obj["id"] = s.id;
        obj["label"] = static_cast<int>(s.label);
        obj["statement"] = s.text;
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

std::string to_csv(const PairDataset& ds) {
    std::string out = "id,statement,label\n";
    for (const auto& s : ds.statements()) {
        out += std::to_string(s.id);
        out.push_back(',');
        out += io::csv_escape(s.text);
        out.push_back(',');
        out += std::to_string(static_cast<int>(s.label));
        out.push_back('\n');
    }
    return out;
}

void save_pair_dataset(const PairDataset& ds, const std::filesystem::path& path, DatasetFormat format) {
    io::write_file_atomic(path, format == DatasetFormat::csv ? to_csv(ds) : to_canonical_jsonl(ds));
}

std::string dataset_fingerprint(const PairDataset& ds) { return io::sha256_hex(to_canonical_jsonl(ds)); }

ContrastInputs build_contrast_inputs(const PairDataset& ds, std::string_view suffix_yes,
                                     std::string_view suffix_no) {
    if (suffix_yes.empty() || suffix_no.empty()) throw ConfigError("contrast suffixes must be non-empty");
    ContrastInputs out;
    out.suffix_yes = suffix_yes;
    out.suffix_no = suffix_no;
    if (suffix_yes == suffix_no) {
        out.warnings.push_back("agreement and disagreement suffixes are identical ('" + std::string(suffix_yes) +
                               "'); contrast pairs carry no suffix signal");
    }
    out.pairs.reserve(ds.n_pairs());
    for (std::size_t i = 0; i < ds.n_pairs(); ++i) {
        const std::string& safe = ds.safe(i).text;
        const std::string& harm = ds.harmful(i).text;
        out.pairs.push_back(ContrastQuad{safe + out.suffix_yes, safe + out.suffix_no, harm + out.suffix_yes,
                                         harm + out.suffix_no});
    }
    return out;
}

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

unsigned char fold(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

bool matches_at(std::string_view text, std::size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) return false;
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (fold(static_cast<unsigned char>(text[pos + k])) != fold(static_cast<unsigned char>(word[k]))) {
            return false;
        }
    }
    const bool left_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(text[pos - 1]));
    const std::size_t after = pos + word.size();
    const bool right_ok = after == text.size() || !is_word_byte(static_cast<unsigned char>(text[after]));
    return left_ok && right_ok;
}

}  // namespace

std::string substitute_word(std::string_view text, std::string_view target, std::string_view replacement,
                            std::size_t* count) {
    if (target.empty()) throw ConfigError("substitution target must be non-empty");
    std::string out;
    out.reserve(text.size());
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (matches_at(text, i, target)) {
            out += replacement;
            i += target.size();
            ++n;
        } else {
            out.push_back(text[i++]);
        }
    }
    if (count) *count += n;
    return out;
}

std::size_t count_word_occurrences(std::string_view text, std::string_view word) {
    if (word.empty()) throw ConfigError("search token must be non-empty");
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (matches_at(text, i, word)) {
            ++n;
            i += word.size();
        } else {
            ++i;
        }
    }
    return n;
}

bool contains_word(std::string_view text, std::string_view word) { return count_word_occurrences(text, word) > 0; }

SubstitutionResult substitute_polarity_token(const PairDataset& ds, std::string_view target,
                                             std::string_view replacement) {
    std::size_t count = 0;
    std::vector<Statement> statements = ds.statements();
    for (auto& s : statements) s.text = substitute_word(s.text, target, replacement, &count);
    return SubstitutionResult{PairDataset(std::move(statements), ds.pair_type(), ds.name()), count};
}

DatasetStats dataset_stats(const PairDataset& ds, std::string_view token) {
    DatasetStats st;
    st.n_total = ds.size();
    st.n_pairs = ds.n_pairs();
    std::size_t harm_hits = 0, safe_hits = 0;
    for (std::size_t i = 0; i < ds.n_pairs(); ++i) {
        if (contains_word(ds.harmful(i).text, token)) ++harm_hits;
        if (contains_word(ds.safe(i).text, token)) ++safe_hits;
    }
    st.frac_token_harm = static_cast<double>(harm_hits) / static_cast<double>(st.n_pairs);
    st.frac_token_safe = static_cast<double>(safe_hits) / static_cast<double>(st.n_pairs);
    return st;
}

const std::vector<std::string>& default_control_tokens() {
    static const std::vector<std::string> tokens = {"ttt", "eps", "moo", "urm", "432", "/////"};
    return tokens;
}

}  // namespace paccs
