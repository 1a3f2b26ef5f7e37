// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtr {

std::uint64_t config_hash_of(const std::map<std::string, std::string>& config) {
    std::string canonical;
    for (const auto& [k, v] : config) {
        canonical += k;
        canonical += '=';
        canonical += v;
        canonical += '\n';
    }
    return fnv1a(canonical);
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

}  // namespace

void save_manifest(const std::string& path, const RunManifest& manifest) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(msg("cannot write manifest: ", tmp));
        out << "MTRANK_MANIFEST " << manifest.version << '\n';
        out << "arch " << manifest.arch << '\n';
        out << "seed " << manifest.seed << '\n';
        out << "config_hash " << hex64(config_hash_of(manifest.config)) << '\n';
        out << "dataset_fingerprint " << hex64(manifest.dataset_fingerprint) << '\n';
        for (const auto& [k, v] : manifest.config) out << "config " << k << ' ' << v << '\n';
        out.precision(17);
        for (const auto& [k, v] : manifest.metrics) out << "metric " << k << ' ' << v << '\n';
        out << "vocab " << manifest.vocab_tokens.size() << '\n';
        for (const auto& t : manifest.vocab_tokens) out << t << '\n';
        out << "tensors " << manifest.tensors.size() << '\n';
        for (const auto& p : manifest.tensors) {
            out << "tensor " << p.name << ' ' << (p.trainable ? 1 : 0) << ' ' << p.tensor->rank();
            for (int e : p.tensor->shape) out << ' ' << e;
            out << '\n';
        }
        out << "BINARY\n";
        for (const auto& p : manifest.tensors) {
            out.write(reinterpret_cast<const char*>(p.tensor->values.data()),
                      static_cast<std::streamsize>(p.tensor->values.size() * sizeof(double)));
        }
        if (!out) throw Error(msg("write failure on manifest: ", tmp));
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error(msg("cannot move ", tmp, " into place at ", path));
    }
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(msg("cannot open manifest: ", path));
    RunManifest m;
    std::string line;
    long lineno = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw ParseError("unexpected end of manifest", lineno);
        ++lineno;
    };
    next_line();
    {
        std::istringstream ls(line);
        std::string magic;
        ls >> magic >> m.version;
        if (magic != "MTRANK_MANIFEST") throw ParseError("not a manifest file", lineno);
        if (m.version != kManifestVersion) {
            throw ParseError(msg("unsupported manifest version ", m.version), lineno);
        }
    }
    std::uint64_t declared_hash = 0;
    // Header keys, then the vocab block, then tensor declarations.
    while (true) {
        next_line();
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "arch") {
            ls >> m.arch;
        } else if (key == "seed") {
            ls >> m.seed;
        } else if (key == "config_hash") {
            std::string hex;
            ls >> hex;
            declared_hash = parse_hex64(hex);
        } else if (key == "dataset_fingerprint") {
            std::string hex;
            ls >> hex;
            m.dataset_fingerprint = parse_hex64(hex);
        } else if (key == "config") {
            std::string k, v;
            ls >> k >> v;
            m.config[k] = v;
        } else if (key == "metric") {
            std::string k;
            double v;
            ls >> k >> v;
            m.metrics[k] = v;
        } else if (key == "vocab") {
            std::size_t count = 0;
            ls >> count;
            m.vocab_tokens.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                next_line();
                m.vocab_tokens.push_back(line);
            }
        } else if (key == "tensors") {
            break;
        } else {
            throw ParseError(msg("unknown manifest key \"", key, "\""), lineno);
        }
    }
    std::size_t tensor_count = 0;
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> tensor_count;
    }
    struct Decl {
        std::string name;
        bool trainable;
        std::vector<int> shape;
    };
    std::vector<Decl> decls;
    decls.reserve(tensor_count);
    for (std::size_t i = 0; i < tensor_count; ++i) {
        next_line();
        std::istringstream ls(line);
        std::string key;
        Decl d;
        int trainable = 0, rank = 0;
        ls >> key >> d.name >> trainable >> rank;
        if (key != "tensor" || rank <= 0) throw ParseError("malformed tensor declaration", lineno);
        d.trainable = trainable != 0;
        d.shape.resize(static_cast<std::size_t>(rank));
        for (int r = 0; r < rank; ++r) ls >> d.shape[static_cast<std::size_t>(r)];
        decls.push_back(std::move(d));
    }
    next_line();
    if (line != "BINARY") throw ParseError("expected BINARY marker", lineno);
    for (auto& d : decls) {
        const auto n = static_cast<std::size_t>(shape_size(d.shape));
        std::vector<double> values(n);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw ParseError(msg("truncated payload for tensor ", d.name), lineno);
        m.tensors.push_back(
            Parameter{d.name, Tensor::make(std::move(d.shape), std::move(values)), d.trainable});
    }
    m.config_hash = config_hash_of(m.config);
    if (declared_hash != 0 && declared_hash != m.config_hash) {
        throw ParseError("config hash mismatch (manifest corrupted?)", lineno);
    }
    return m;
}

RunManifest make_model_manifest(const RankingModel& model, const Vocabulary& vocab,
                                const EmbeddingTable& table, std::uint64_t seed,
                                std::uint64_t dataset_fingerprint,
                                const std::map<std::string, double>& metrics,
                                const std::map<std::string, std::string>& extra_config) {
    RunManifest m;
    m.arch = arch_name(model.arch);
    m.config = model.config.to_map();
    for (const auto& [k, v] : extra_config) m.config[k] = v;
    m.config["embedding_dim"] = std::to_string(model.embedding_dim);
    m.seed = seed;
    m.dataset_fingerprint = dataset_fingerprint;
    m.metrics = metrics;
    m.config_hash = config_hash_of(m.config);
    for (int id = 0; id < vocab.loaded_count(); ++id) m.vocab_tokens.push_back(vocab.token(id));
    m.tensors = model.parameters(&table);
    return m;
}

LoadedModel restore_model(const RunManifest& manifest) {
    if (manifest.is_bm25()) throw ValueError("restore_model: bm25 manifests carry no model tensors");

    std::map<std::string, Parameter> by_name;
    for (const auto& p : manifest.tensors) by_name.emplace(p.name, p);

    auto table_it = by_name.find("embeddings.table");
    if (table_it == by_name.end()) throw ValueError("restore_model: embeddings.table missing");

    LoadedModel loaded;
    loaded.vocab = Vocabulary(manifest.vocab_tokens);
    loaded.table.table = table_it->second.tensor;
    loaded.table.dim = table_it->second.tensor->shape[1];
    if (table_it->second.tensor->shape[0] != loaded.vocab.size()) {
        throw ValueError(msg("restore_model: table rows ", table_it->second.tensor->shape[0],
                             " vs vocabulary size ", loaded.vocab.size()));
    }

    const ModelConfig config = ModelConfig::from_map(manifest.config);
    loaded.model = RankingModel::create(arch_from_string(manifest.arch), config, loaded.table.dim,
                                        manifest.seed);
    for (auto& p : loaded.model.parameters()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw ValueError(msg("restore_model: tensor ", p.name, " missing"));
        if (it->second.tensor->shape != p.tensor->shape) {
            throw ValueError(msg("restore_model: tensor ", p.name, " has shape ",
                                 it->second.tensor->shape_str(), ", expected ",
                                 p.tensor->shape_str()));
        }
        p.tensor->values = it->second.tensor->values;
        p.tensor->invalidate_finite_cache();
    }
    return loaded;
}

}  // namespace mtr
