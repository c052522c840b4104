#include "sarc/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace sarc {

std::string normalize(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char ch : text) {
        char mapped;
        if (ch >= 'A' && ch <= 'Z')
            mapped = static_cast<char>(ch - 'A' + 'a');
        else if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9'))
            mapped = static_cast<char>(ch);
        else
            mapped = ' ';  // punctuation, symbols, and any non-ASCII byte
        if (mapped == ' ') {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(mapped);
        }
    }
    if (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::vector<std::string> tokenize(const std::string& normalized) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start < normalized.size()) {
        std::size_t end = normalized.find(' ', start);
        if (end == std::string::npos) end = normalized.size();
        if (end > start) tokens.emplace_back(normalized.substr(start, end - start));
        start = end + 1;
    }
    return tokens;
}

Vocabulary Vocabulary::build(const std::vector<RawExample>& corpus) {
    if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
    std::unordered_map<std::string, long long> freq;
    for (const auto& ex : corpus)
        for (const auto& tok : tokenize(normalize(ex.headline))) ++freq[tok];
    if (freq.empty()) throw ContractError("build_vocab: corpus produced no tokens after normalization");
    std::vector<std::pair<std::string, long long>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;  // frequency, descending
        return a.first < b.first;                              // then lexicographic
    });
    Vocabulary v;
    v.tokens_.reserve(entries.size());
    for (auto& e : entries) v.tokens_.push_back(std::move(e.first));
    v.rebuild_index();
    return v;
}

void Vocabulary::rebuild_index() {
    index_.clear();
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i) + 2;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    static const std::string pad = "<pad>", unk = "<unk>";
    if (id == kPadId) return pad;
    if (id == kUnkId) return unk;
    if (id < 0 || id - 2 >= static_cast<int>(tokens_.size()))
        throw IndexError("vocabulary id " + std::to_string(id) + " out of range (size " +
                         std::to_string(size()) + ")");
    return tokens_[id - 2];
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& tok : tokens_) {
        out += tok;
        out += '\n';
    }
    return out;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write vocabulary file: " + path);
    f << serialize();
    if (!f) throw IoError("failed writing vocabulary file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        v.tokens_.push_back(line);
    }
    v.rebuild_index();
    return v;
}

std::uint64_t Vocabulary::content_hash() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (const auto& tok : tokens_) {
        for (unsigned char c : tok) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 1099511628211ULL;
    }
    return h;
}

std::optional<EncodedExample> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                     int max_len) {
    if (max_len <= 0) throw ContractError("encode: max_len must be positive");
    if (tokens.empty()) return std::nullopt;
    EncodedExample ex;
    ex.ids.assign(max_len, Vocabulary::kPadId);
    ex.mask.assign(max_len, 0);
    const int real = std::min<int>(max_len, static_cast<int>(tokens.size()));
    for (int i = 0; i < real; ++i) {  // truncation keeps the leftmost tokens
        ex.ids[i] = vocab.id_of(tokens[i]);
        ex.mask[i] = 1;
    }
    return ex;
}

std::vector<std::string> decode(const EncodedExample& ex, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < ex.ids.size(); ++i)
        if (ex.mask[i]) tokens.push_back(vocab.token_of(ex.ids[i]));
    return tokens;
}

std::vector<EncodedExample> encode_corpus(const std::vector<RawExample>& corpus, const Vocabulary& vocab,
                                          int max_len, EncodeStats* stats) {
    std::vector<EncodedExample> out;
    out.reserve(corpus.size());
    EncodeStats local;
    for (const auto& raw : corpus) {
        auto enc = encode(tokenize(normalize(raw.headline)), vocab, max_len);
        if (!enc) {
            ++local.rejected;
            continue;
        }
        enc->label = raw.label;
        out.push_back(std::move(*enc));
        ++local.kept;
    }
    if (stats) *stats = local;
    return out;
}

namespace {

int parse_label(const std::string& raw, const std::string& where) {
    std::string s = raw;
    s.erase(0, s.find_first_not_of(" \t"));
    if (auto last = s.find_last_not_of(" \t"); last != std::string::npos) s.erase(last + 1);
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw DataError("unknown label value \"" + raw + "\" at " + where + " (expected 0 or 1)");
}

// Minimal delimited-text reader: comma separator, double-quote quoting with
// "" escapes, quoted fields may contain commas and newlines.
std::vector<std::pair<std::vector<std::string>, int>> read_delimited_records(const std::string& content) {
    std::vector<std::pair<std::vector<std::string>, int>> records;  // fields + 1-based start line
    std::vector<std::string> fields;
    std::string field;
    int line = 1, record_line = 1;
    bool in_quotes = false;
    bool any_char = false;
    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        // A record that is a single empty field is a blank line; skip it.
        if (!(fields.size() == 1 && fields[0].empty())) records.emplace_back(std::move(fields), record_line);
        fields.clear();
        any_char = false;
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (!any_char) {
            record_line = line;
            any_char = true;
        }
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            ++line;
            end_record();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (in_quotes) throw DataError("unterminated quote in delimited file (record starting at line " +
                                   std::to_string(record_line) + ")");
    if (any_char || !field.empty() || !fields.empty()) end_record();
    return records;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

DatasetLoad parse_delimited(const std::string& content) {
    auto records = read_delimited_records(content);
    if (records.empty()) throw ContractError("dataset file has no records");
    const auto& header = records[0].first;
    int text_col = -1, label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = lower(header[i]);
        if (name == "headline") text_col = static_cast<int>(i);
        if (name == "label" || name == "is_sarcastic") label_col = static_cast<int>(i);
    }
    if (text_col < 0 || label_col < 0)
        throw DataError("dataset header must name a \"headline\" column and a \"label\"/\"is_sarcastic\" column");
    DatasetLoad out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [fields, line] = records[r];
        const std::string where = "line " + std::to_string(line);
        if (static_cast<int>(fields.size()) <= std::max(text_col, label_col))
            throw DataError("malformed record at " + where + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        RawExample ex;
        ex.headline = fields[text_col];
        ex.label = parse_label(fields[label_col], where);
        out.examples.push_back(std::move(ex));
    }
    return out;
}

DatasetLoad parse_jsonl(const std::string& content) {
    DatasetLoad out;
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed record at " + where + ": " + e.what());
        }
        if (!record.is_object() || !record.contains("headline"))
            throw DataError("malformed record at " + where + ": missing \"headline\" field");
        const auto label_it = record.contains("label") ? record.find("label") : record.find("is_sarcastic");
        if (label_it == record.end())
            throw DataError("malformed record at " + where + ": missing \"label\"/\"is_sarcastic\" field");
        RawExample ex;
        if (!record["headline"].is_string())
            throw DataError("malformed record at " + where + ": \"headline\" must be a string");
        ex.headline = record["headline"].get<std::string>();
        if (label_it->is_number_integer())
            ex.label = parse_label(std::to_string(label_it->get<long long>()), where);
        else if (label_it->is_boolean())
            ex.label = label_it->get<bool>() ? 1 : 0;
        else
            throw DataError("unknown label value at " + where + " (expected 0 or 1)");
        out.examples.push_back(std::move(ex));
    }
    if (out.examples.empty()) throw ContractError("dataset file has no records");
    return out;
}

}  // namespace

DatasetLoad load_dataset(const std::string& path, DatasetFormat format) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read dataset file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string content = buf.str();
    if (content.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ContractError("dataset file has no records: " + path);
    if (format == DatasetFormat::auto_detect) {
        auto ends_with = [&](const char* suffix) {
            const std::string s(suffix);
            return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with(".json") || ends_with(".jsonl"))
            format = DatasetFormat::jsonl;
        else if (ends_with(".csv") || ends_with(".tsv") || ends_with(".txt"))
            format = DatasetFormat::delimited;
        else
            format = content[content.find_first_not_of(" \t\r\n")] == '{' ? DatasetFormat::jsonl
                                                                          : DatasetFormat::delimited;
    }
    DatasetLoad out = format == DatasetFormat::jsonl ? parse_jsonl(content) : parse_delimited(content);
    if (out.examples.empty()) throw ContractError("dataset file has no records: " + path);
    for (const auto& ex : out.examples) (ex.label == 1 ? out.n_sarcastic : out.n_non_sarcastic) += 1;
    return out;
}

std::optional<std::string> count_mismatch_warning(const DatasetLoad& load, const SplitExpectation& expected,
                                                  const std::string& split_name) {
    if (load.n_sarcastic == expected.sarcastic && load.n_non_sarcastic == expected.non_sarcastic)
        return std::nullopt;
    std::ostringstream os;
    os << "warning: " << split_name << " split counts (" << load.n_sarcastic << " sarcastic, "
       << load.n_non_sarcastic << " non-sarcastic) differ from the published counts (" << expected.sarcastic
       << " sarcastic, " << expected.non_sarcastic << " non-sarcastic)";
    return os.str();
}

EmbeddingSource EmbeddingSource::load(const std::string& path, int embed_dim) {
    if (embed_dim <= 0) throw ContractError("embedding dimension must be positive");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read embedding file: " + path);
    EmbeddingSource src;
    src.dim_ = embed_dim;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const char* p = line.c_str();
        while (*p == ' ' || *p == '\t') ++p;
        const char* tok_start = p;
        while (*p && *p != ' ' && *p != '\t') ++p;
        std::string token(tok_start, p);
        std::vector<float> vec;
        vec.reserve(embed_dim);
        while (true) {
            while (*p == ' ' || *p == '\t') ++p;
            if (!*p) break;
            char* end = nullptr;
            const float v = std::strtof(p, &end);
            if (end == p)
                throw DataError("embedding parse error at line " + std::to_string(line_no) +
                                ": not a number near \"" + std::string(p).substr(0, 12) + "\"");
            vec.push_back(v);
            p = end;
        }
        if (static_cast<int>(vec.size()) != embed_dim)
            throw DataError("embedding dimension mismatch at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(embed_dim) + " components, got " + std::to_string(vec.size()));
        src.vectors_[std::move(token)] = std::move(vec);
    }
    return src;
}

const std::vector<float>* EmbeddingSource::find(const std::string& token) const {
    auto it = vectors_.find(token);
    return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, bool shuffle, std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

TrainValSplit stratified_split(const std::vector<RawExample>& examples, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ContractError("val_fraction must lie in [0, 1)");
    TrainValSplit split;
    for (int label : {0, 1}) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < examples.size(); ++i)
            if (examples[i].label == label) idx.push_back(static_cast<int>(i));
        std::mt19937_64 rng(seed ^ (0xA076'1D64'78BD'642FULL * static_cast<std::uint64_t>(label + 1)));
        std::shuffle(idx.begin(), idx.end(), rng);
        const int n_val = static_cast<int>(val_fraction * static_cast<double>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (static_cast<int>(i) < n_val ? split.val_idx : split.train_idx).push_back(idx[i]);
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.val_idx.begin(), split.val_idx.end());
    return split;
}

}  // namespace sarc
