#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sarc/data.hpp"

namespace sarc {

// Deterministic synthetic headline corpus for desk-scale experiments and
// tests. Sarcasm is modeled as incongruity: a sarcastic headline pairs a
// positive-sentiment word with a mundane or negative cue in one sentence,
// while a non-sarcastic headline draws on at most one of those pools. The
// signal is therefore compositional (word co-occurrence), not a single
// keyword. A small fraction of labels is flipped as noise.
struct SynthSpec {
    int train_per_class = 400;
    int test_per_class = 120;
    int embed_dim = 32;
    double label_noise = 0.04;
    std::uint64_t seed = 1234;
};

struct SynthCorpus {
    std::vector<RawExample> train;
    std::vector<RawExample> test;
};

SynthCorpus make_synth_corpus(const SynthSpec& spec);

// Structured embedding vectors for every pool word (sentiment pools occupy
// distinct coordinate blocks), written in "token v1 v2 ..." text form. A
// small slice of the filler pool is withheld so loaders exercise the
// missing-token path.
void write_synth_embeddings(const std::string& path, const SynthSpec& spec);

void write_dataset_csv(const std::string& path, const std::vector<RawExample>& examples);
void write_dataset_jsonl(const std::string& path, const std::vector<RawExample>& examples);

}  // namespace sarc
