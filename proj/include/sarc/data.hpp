#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sarc/errors.hpp"
#include "sarc/layers.hpp"

namespace sarc {

// One labeled input text; label 1 = sarcastic, 0 = not.
struct RawExample {
    std::string headline;
    int label = -1;
};

// Lowercases, replaces every character outside [a-z, 0-9, space] with a space,
// collapses whitespace runs, and strips the ends. Idempotent.
std::string normalize(const std::string& text);

// Splits normalized text on spaces; never yields empty tokens.
std::vector<std::string> tokenize(const std::string& normalized);

// Token <-> id map. Id 0 is the pad, id 1 the unknown token; corpus tokens
// start at id 2, ordered by descending frequency with lexicographic
// tie-breaks, which makes construction deterministic.
class Vocabulary {
  public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;

    // Builds from raw examples (normalize + tokenize applied here).
    // Throws ContractError on an empty corpus.
    static Vocabulary build(const std::vector<RawExample>& corpus);

    int size() const { return static_cast<int>(tokens_.size()) + 2; }
    // kUnkId for tokens not in the vocabulary.
    int id_of(const std::string& token) const;
    // Reserved ids render as "<pad>" / "<unk>".
    const std::string& token_of(int id) const;
    const std::vector<std::string>& corpus_tokens() const { return tokens_; }

    // One token per line, line number = id - 2 (pad/unk implicit).
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
    std::string serialize() const;

    // FNV-1a over the serialized artifact; ties checkpoints to the exact
    // vocabulary they were trained with.
    std::uint64_t content_hash() const;

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    void rebuild_index();
};

// Fixed-length encoding of one example. The mask is a prefix of trues; ids
// are 0 wherever the mask is false.
struct EncodedExample {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    int label = -1;
};

// Unknown tokens map to id 1; truncation keeps the leftmost max_len tokens;
// shorter sequences are padded with id 0. Returns nullopt for an empty token
// list (the caller logs and excludes it).
std::optional<EncodedExample> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                     int max_len = 20);

// Tokens at the non-pad positions (inverse of encode for in-vocab tokens).
std::vector<std::string> decode(const EncodedExample& ex, const Vocabulary& vocab);

struct EncodeStats {
    int kept = 0;
    int rejected = 0;  // empty after normalization
};

// normalize + tokenize + encode over a corpus, carrying labels through and
// excluding examples that normalize to nothing.
std::vector<EncodedExample> encode_corpus(const std::vector<RawExample>& corpus, const Vocabulary& vocab,
                                          int max_len, EncodeStats* stats = nullptr);

enum class DatasetFormat { auto_detect, delimited, jsonl };

struct DatasetLoad {
    std::vector<RawExample> examples;
    int n_sarcastic = 0;
    int n_non_sarcastic = 0;
};

// Reads a dataset file. Delimited files need a header row naming a text
// column ("headline") and a label column ("label" or "is_sarcastic");
// record-per-line structured files need the same fields per record.
DatasetLoad load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::auto_detect);

// Published per-split counts the loader checks supplied files against.
struct SplitExpectation {
    int sarcastic;
    int non_sarcastic;
};
inline constexpr SplitExpectation kExpectedTrainCounts{2516, 2504};
inline constexpr SplitExpectation kExpectedTestCounts{570, 410};

// Non-empty when the loaded counts differ from the expectation; the caller
// surfaces it as a warning (counts are expectations, not hard assertions).
std::optional<std::string> count_mismatch_warning(const DatasetLoad& load, const SplitExpectation& expected,
                                                  const std::string& split_name);

// Pre-trained word vectors parsed from "token v1 ... vN" lines.
class EmbeddingSource {
  public:
    static EmbeddingSource load(const std::string& path, int embed_dim);
    const std::vector<float>* find(const std::string& token) const;
    std::size_t size() const { return vectors_.size(); }
    int dim() const { return dim_; }

  private:
    int dim_ = 0;
    std::unordered_map<std::string, std::vector<float>> vectors_;
};

template <typename T>
struct EmbeddingInit {
    EmbeddingParams<T> params;
    int found = 0;
    int missing = 0;
    double coverage = 0.0;  // found / corpus tokens
};

// Builds the [vocab x embed_dim] table: pad row zero, tokens found in the
// source copied exactly, everything else (unknown row included) seeded
// uniform(-0.05, 0.05). Row draws are seeded per row id, so the result is
// bitwise-stable for a given (seed, vocab, source).
template <typename T>
EmbeddingInit<T> init_embeddings(const Vocabulary& vocab, const EmbeddingSource& source, std::uint64_t seed) {
    const int rows = vocab.size(), dim = source.dim();
    EmbeddingInit<T> out;
    std::vector<T> table(static_cast<std::size_t>(rows) * dim, T(0));
    for (int id = 1; id < rows; ++id) {
        const std::vector<float>* vec = nullptr;
        if (id >= 2) vec = source.find(vocab.token_of(id));
        T* row = table.data() + static_cast<std::size_t>(id) * dim;
        if (vec) {
            for (int j = 0; j < dim; ++j) row[j] = static_cast<T>((*vec)[j]);
            ++out.found;
        } else {
            std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(id + 1)));
            std::uniform_real_distribution<double> dist(-0.05, 0.05);
            for (int j = 0; j < dim; ++j) row[j] = static_cast<T>(dist(rng));
            if (id >= 2) ++out.missing;
        }
    }
    out.params.table = Tensor<T>::create({rows, dim}, std::move(table), true);
    out.params.pad_id = Vocabulary::kPadId;
    const int corpus = rows - 2;
    out.coverage = corpus > 0 ? static_cast<double>(out.found) / corpus : 0.0;
    return out;
}

// Deterministic batch order for one epoch: a seeded shuffle of [0, n) when
// enabled, chopped into batch_size groups with the final partial batch kept.
std::vector<std::vector<int>> make_batches(int n, int batch_size, bool shuffle, std::uint64_t seed, int epoch);

// Stratified validation carve-out: within each class, a seeded shuffle of the
// file-order indices, taking floor(fraction * class_size) for validation.
struct TrainValSplit {
    std::vector<int> train_idx;
    std::vector<int> val_idx;
};
TrainValSplit stratified_split(const std::vector<RawExample>& examples, double val_fraction, std::uint64_t seed);

}  // namespace sarc
