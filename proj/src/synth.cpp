#include "sarc/synth.hpp"

#include <fstream>
#include <random>
#include <unordered_set>

#include "json.hpp"
#include "sarc/model.hpp"  // fnv1a64

namespace sarc {

namespace {

const std::vector<std::string> kPositive = {
    "amazing", "awesome",   "brilliant", "delightful", "excellent", "fabulous", "fantastic",
    "glorious", "great",    "incredible", "lovely",    "magical",   "marvelous", "perfect",
    "splendid", "superb",   "terrific",  "thrilling",  "wonderful", "joyful"};
const std::vector<std::string> kMundane = {
    "monday",  "meeting",   "commute",     "laundry",  "paperwork", "traffic",   "queue",  "chores",
    "invoice", "deadline",  "dishes",      "taxes",    "renovation", "spreadsheet", "inventory", "audit"};
const std::vector<std::string> kNegative = {
    "delay",   "outage",  "shortage", "breakdown", "strike",  "leak", "recall", "glitch",
    "backlog", "closure", "detour",   "downtime",  "failure", "jam",  "mess",   "repair"};
const std::vector<std::string> kAmplifier = {"absolutely", "totally", "just",    "truly",
                                             "simply",     "really",  "utterly", "oh"};
const std::vector<std::string> kSubject = {"city",    "council", "airport", "station", "office",  "school",
                                           "library", "market",  "factory", "bank",    "museum",  "harbor"};
const std::vector<std::string> kVerb = {"reports",  "announces", "schedules", "reviews",  "extends", "opens",
                                        "closes",   "confirms",  "updates",   "plans",    "inspects", "postpones"};
const std::vector<std::string> kPositiveObject = {"award",   "festival",    "victory",  "concert",
                                                  "garden",  "holiday",     "parade",   "gallery",
                                                  "scholarship", "sunrise", "reunion",  "celebration"};
const std::vector<std::string> kFiller = {
    "about", "after",    "again",  "all",   "another", "around",  "before", "big",   "busy",  "day",
    "downtown", "during", "early",  "evening", "every", "extra",   "final",  "first", "for",   "full",
    "her",   "his",      "hour",   "into",  "late",    "local",   "long",   "morning", "new", "next",
    "night", "now",      "of",     "on",    "over",    "second",  "small",  "soon",  "the",   "this",
    "today", "tomorrow", "under",  "week",  "weekend", "while",   "with",   "year"};

const std::string& pick(std::mt19937_64& rng, const std::vector<std::string>& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

bool coin(std::mt19937_64& rng, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

void push_fillers(std::mt19937_64& rng, std::vector<std::string>& tokens, int lo, int hi) {
    const int n = std::uniform_int_distribution<int>(lo, hi)(rng);
    for (int i = 0; i < n; ++i) tokens.push_back(pick(rng, kFiller));
}

std::string join(const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

const std::string& pick_cue(std::mt19937_64& rng) {
    return coin(rng, 0.5) ? pick(rng, kMundane) : pick(rng, kNegative);
}

// Sarcastic: a positive-sentiment word and a mundane/negative cue share the
// sentence, at least two positions apart.
std::string make_sarcastic(std::mt19937_64& rng) {
    std::vector<std::string> tokens;
    if (coin(rng, 0.3)) {
        tokens.push_back(pick(rng, kSubject));
        tokens.push_back(pick(rng, kVerb));
    }
    if (coin(rng, 0.5)) tokens.push_back(pick(rng, kAmplifier));
    tokens.push_back(pick(rng, kPositive));
    push_fillers(rng, tokens, 1, 2);
    tokens.push_back(pick_cue(rng));
    if (coin(rng, 0.6)) push_fillers(rng, tokens, 1, 2);
    return join(tokens);
}

// Non-sarcastic: draws on at most one of the two signal pools — plain
// positive news, or plain mundane/negative news (possibly with two cues).
std::string make_non_sarcastic(std::mt19937_64& rng) {
    std::vector<std::string> tokens;
    if (coin(rng, 0.7)) {
        tokens.push_back(pick(rng, kSubject));
        tokens.push_back(pick(rng, kVerb));
    }
    push_fillers(rng, tokens, 0, 1);
    if (coin(rng, 0.5)) {
        tokens.push_back(pick(rng, kPositive));
        if (coin(rng, 0.7)) tokens.push_back(pick(rng, kPositiveObject));
    } else {
        tokens.push_back(pick_cue(rng));
        if (coin(rng, 0.5)) tokens.push_back(pick_cue(rng));
    }
    push_fillers(rng, tokens, 0, 2);
    return join(tokens);
}

std::vector<RawExample> make_split(std::mt19937_64& rng, int per_class, double label_noise,
                                   std::unordered_set<std::string>& seen) {
    std::vector<RawExample> out;
    out.reserve(static_cast<std::size_t>(per_class) * 2);
    for (int i = 0; i < per_class * 2; ++i) {
        const int label = i % 2;
        std::string headline;
        for (int attempt = 0; attempt < 100; ++attempt) {
            headline = label == 1 ? make_sarcastic(rng) : make_non_sarcastic(rng);
            if (seen.insert(headline).second) break;
        }
        RawExample ex;
        ex.headline = std::move(headline);
        ex.label = coin(rng, label_noise) ? 1 - label : label;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

SynthCorpus make_synth_corpus(const SynthSpec& spec) {
    if (spec.train_per_class < 1 || spec.test_per_class < 1)
        throw ContractError("synthetic corpus needs at least one example per class per split");
    std::mt19937_64 rng(spec.seed);
    std::unordered_set<std::string> seen;
    SynthCorpus corpus;
    corpus.train = make_split(rng, spec.train_per_class, spec.label_noise, seen);
    corpus.test = make_split(rng, spec.test_per_class, spec.label_noise, seen);
    return corpus;
}

void write_synth_embeddings(const std::string& path, const SynthSpec& spec) {
    if (spec.embed_dim < 1) throw ContractError("embedding dimension must be positive");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write embedding file: " + path);
    // Block layout: positive words load coordinates [0, b), mundane cues
    // [b, 2b), negative cues [2b, 3b), with b = dim/4 (at least 1); every
    // other pool is noise around zero. Positive objects get a gentle tilt
    // into the positive block so pools stay linearly related but distinct.
    const int b = std::max(1, spec.embed_dim / 4);
    auto write_pool = [&](const std::vector<std::string>& pool, int block_start, double block_value) {
        for (const auto& token : pool) {
            std::mt19937_64 rng(fnv1a64(token) ^ (spec.seed * 0x9E3779B97F4A7C15ULL));
            std::uniform_real_distribution<double> noise(-0.15, 0.15);
            f << token;
            for (int d = 0; d < spec.embed_dim; ++d) {
                double v = noise(rng);
                if (d >= block_start && d < block_start + b) v += block_value;
                char buf[32];
                std::snprintf(buf, sizeof(buf), " %.5f", v);
                f << buf;
            }
            f << "\n";
        }
    };
    write_pool(kPositive, 0, 0.8);
    write_pool(kMundane, b, 0.8);
    write_pool(kNegative, 2 * b, 0.8);
    write_pool(kPositiveObject, 0, 0.3);
    write_pool(kAmplifier, 0, 0.0);
    write_pool(kSubject, 0, 0.0);
    write_pool(kVerb, 0, 0.0);
    // Withhold every seventh filler so embedding coverage stays below 1 and
    // the random-init fallback path gets exercised.
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < kFiller.size(); ++i)
        if (i % 7 != 6) kept.push_back(kFiller[i]);
    write_pool(kept, 0, 0.0);
    if (!f) throw IoError("failed writing embedding file: " + path);
}

void write_dataset_csv(const std::string& path, const std::vector<RawExample>& examples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write dataset file: " + path);
    auto quoted = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q += c;
        }
        q += '"';
        return q;
    };
    f << "headline,label\n";
    for (const auto& ex : examples) f << quoted(ex.headline) << "," << ex.label << "\n";
    if (!f) throw IoError("failed writing dataset file: " + path);
}

void write_dataset_jsonl(const std::string& path, const std::vector<RawExample>& examples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write dataset file: " + path);
    for (const auto& ex : examples) {
        nlohmann::json record{{"headline", ex.headline}, {"is_sarcastic", ex.label}};
        f << record.dump() << "\n";
    }
    if (!f) throw IoError("failed writing dataset file: " + path);
}

}  // namespace sarc
