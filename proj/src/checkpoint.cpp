#include "sarc/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; this build targets a little-endian host");
static_assert(sizeof(float) == 4, "checkpoint blobs store 32-bit floats");

namespace sarc {

namespace {

constexpr const char* kMagic = "sarc-checkpoint v1";

struct TableEntry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;

    std::size_t count() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }
};

std::string shape_text(const std::vector<int>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s;
}

std::vector<int> parse_shape(const std::string& text, const std::string& path) {
    std::vector<int> shape;
    std::istringstream in(text);
    std::string piece;
    while (std::getline(in, piece, ',')) {
        try {
            shape.push_back(std::stoi(piece));
        } catch (const std::exception&) {
            throw DataError("checkpoint " + path + ": bad shape entry \"" + text + "\"");
        }
    }
    if (shape.empty()) throw DataError("checkpoint " + path + ": empty shape entry");
    return shape;
}

void write_config(std::ostream& os, const ModelConfig& c) {
    os << "config.vocab_size=" << c.vocab_size << "\n";
    os << "config.embed_dim=" << c.embed_dim << "\n";
    os << "config.max_len=" << c.max_len << "\n";
    os << "config.conv_filters=" << c.conv_filters << "\n";
    os << "config.conv_width=" << c.conv_width << "\n";
    os << "config.gru_hidden=" << c.gru_hidden << "\n";
    os << "config.lstm_hidden=" << c.lstm_hidden << "\n";
    os << "config.heads=" << c.heads << "\n";
    os << "config.num_classes=" << c.num_classes << "\n";
    os << "config.biases_enabled=" << (c.biases_enabled ? 1 : 0) << "\n";
    os << "config.seed=" << c.seed << "\n";
    os << "config.use_cnn=" << (c.use_cnn ? 1 : 0) << "\n";
    os << "config.use_gru=" << (c.use_gru ? 1 : 0) << "\n";
    os << "config.use_lstm=" << (c.use_lstm ? 1 : 0) << "\n";
    os << "config.use_attention=" << (c.use_attention ? 1 : 0) << "\n";
}

long long manifest_int(const std::map<std::string, std::string>& kv, const std::string& key,
                       const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint " + path + ": missing manifest key " + key);
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw DataError("checkpoint " + path + ": bad value for " + key + ": \"" + it->second + "\"");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const AdamState<float>& adam,
                     std::uint64_t vocab_hash) {
    const auto named = params.named();
    if (!adam.shapes_match(named))
        throw ContractError("cannot save checkpoint: adam state does not match the parameter list");

    std::vector<TableEntry> table;
    std::vector<const std::vector<float>*> sources;
    std::size_t offset = 0;
    auto add = [&](const std::string& name, std::vector<int> shape, const std::vector<float>& src) {
        table.push_back({name, std::move(shape), offset});
        sources.push_back(&src);
        offset += table.back().count();
    };
    for (const auto& p : named) add(p.name, p.tensor->shape, p.tensor->data);
    for (std::size_t i = 0; i < named.size(); ++i)
        add("adam.m." + named[i].name, named[i].tensor->shape, adam.m[i]);
    for (std::size_t i = 0; i < named.size(); ++i)
        add("adam.v." + named[i].name, named[i].tensor->shape, adam.v[i]);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint file: " + path);
    f << kMagic << "\n";
    write_config(f, params.config);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, vocab_hash);
    f << "vocab_hash=" << hex << "\n";
    f << "adam.t=" << adam.t << "\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
        f << "param." << i << ".name=" << table[i].name << "\n";
        f << "param." << i << ".shape=" << shape_text(table[i].shape) << "\n";
        f << "param." << i << ".offset=" << table[i].offset << "\n";
    }
    f << "blob.floats=" << offset << "\n";
    f << "---BLOB---\n";
    for (const auto* src : sources)
        f.write(reinterpret_cast<const char*>(src->data()),
                static_cast<std::streamsize>(src->size() * sizeof(float)));
    if (!f) throw IoError("failed writing checkpoint file: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint file: " + path);

    std::string line;
    if (!std::getline(f, line) || line != kMagic)
        throw DataError("checkpoint " + path + ": not a recognized checkpoint file");
    std::map<std::string, std::string> kv;
    while (std::getline(f, line)) {
        if (line == "---BLOB---") break;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("checkpoint " + path + ": malformed manifest line \"" + line + "\"");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (line != "---BLOB---") throw DataError("checkpoint " + path + ": manifest is not followed by a blob");

    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(manifest_int(kv, "config.vocab_size", path));
    cfg.embed_dim = static_cast<int>(manifest_int(kv, "config.embed_dim", path));
    cfg.max_len = static_cast<int>(manifest_int(kv, "config.max_len", path));
    cfg.conv_filters = static_cast<int>(manifest_int(kv, "config.conv_filters", path));
    cfg.conv_width = static_cast<int>(manifest_int(kv, "config.conv_width", path));
    cfg.gru_hidden = static_cast<int>(manifest_int(kv, "config.gru_hidden", path));
    cfg.lstm_hidden = static_cast<int>(manifest_int(kv, "config.lstm_hidden", path));
    cfg.heads = static_cast<int>(manifest_int(kv, "config.heads", path));
    cfg.num_classes = static_cast<int>(manifest_int(kv, "config.num_classes", path));
    cfg.biases_enabled = manifest_int(kv, "config.biases_enabled", path) != 0;
    cfg.seed = static_cast<std::uint64_t>(manifest_int(kv, "config.seed", path));
    cfg.use_cnn = manifest_int(kv, "config.use_cnn", path) != 0;
    cfg.use_gru = manifest_int(kv, "config.use_gru", path) != 0;
    cfg.use_lstm = manifest_int(kv, "config.use_lstm", path) != 0;
    cfg.use_attention = manifest_int(kv, "config.use_attention", path) != 0;

    LoadedCheckpoint out;
    const auto hash_it = kv.find("vocab_hash");
    if (hash_it == kv.end()) throw DataError("checkpoint " + path + ": missing manifest key vocab_hash");
    out.vocab_hash = std::strtoull(hash_it->second.c_str(), nullptr, 16);

    std::map<std::string, TableEntry> table;
    for (std::size_t i = 0;; ++i) {
        const std::string base = "param." + std::to_string(i) + ".";
        auto name_it = kv.find(base + "name");
        if (name_it == kv.end()) break;
        TableEntry e;
        e.name = name_it->second;
        auto shape_it = kv.find(base + "shape");
        if (shape_it == kv.end()) throw DataError("checkpoint " + path + ": missing shape for " + e.name);
        e.shape = parse_shape(shape_it->second, path);
        e.offset = static_cast<std::size_t>(manifest_int(kv, base + "offset", path));
        table[e.name] = std::move(e);
    }

    const std::size_t blob_floats = static_cast<std::size_t>(manifest_int(kv, "blob.floats", path));
    std::vector<float> blob(blob_floats);
    f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_floats * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != blob_floats * sizeof(float))
        throw DataError("checkpoint " + path + ": blob is shorter than the manifest declares");

    out.params = build_model<float>(cfg);
    out.adam = AdamState<float>::init(out.params.named());
    out.adam.t = manifest_int(kv, "adam.t", path);

    auto fill = [&](const std::string& name, const std::vector<int>& want_shape, std::vector<float>& dst) {
        auto it = table.find(name);
        if (it == table.end()) throw DataError("checkpoint " + path + ": missing tensor " + name);
        const TableEntry& e = it->second;
        if (e.shape != want_shape) {
            std::string got = shape_text(e.shape), want = shape_text(want_shape);
            throw DataError("checkpoint " + path + ": tensor " + name + " has shape " + got +
                            ", the declared configuration requires " + want);
        }
        if (e.offset + e.count() > blob.size())
            throw DataError("checkpoint " + path + ": tensor " + name + " extends past the end of the blob");
        dst.assign(blob.begin() + static_cast<std::ptrdiff_t>(e.offset),
                   blob.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count()));
    };

    auto named = out.params.named();
    std::size_t used = 0;
    for (auto& p : named) {
        fill(p.name, p.tensor->shape, p.tensor->data);
        ++used;
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        fill("adam.m." + named[i].name, named[i].tensor->shape, out.adam.m[i]);
        fill("adam.v." + named[i].name, named[i].tensor->shape, out.adam.v[i]);
        used += 2;
    }
    if (used != table.size())
        throw DataError("checkpoint " + path + ": manifest lists " + std::to_string(table.size()) +
                        " tensors, the declared configuration uses " + std::to_string(used));
    return out;
}

}  // namespace sarc
