#include "rmna/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "rmna/util.hpp"

namespace rmna {

namespace {
constexpr const char* kMagic = "RMNA-CKPT v1";

std::string hash_hex(uint64_t h) {
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}
} // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    out << kMagic << '\n';
    out << "kind=" << kind << '\n';
    for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
    for (const auto& [name, t] : tensors) {
        out << "tensor " << name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (size_t r = 0; r < t.rows; ++r) {
            const auto row = t.row(r);
            for (size_t c = 0; c < t.cols; ++c) {
                if (c) out << ' ';
                out << format_float(row[c]);
            }
            out << '\n';
        }
    }
    out << "end\n";
    if (!out) throw CheckpointError("write failure on '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("missing checkpoint '" + path + "'");
    Checkpoint ckpt;
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw CheckpointError(path + ": bad magic header");
    bool finished = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            finished = true;
            break;
        }
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream head(line.substr(7));
            std::string name;
            size_t rows = 0, cols = 0;
            if (!(head >> name >> rows >> cols))
                throw CheckpointError(path + ": malformed tensor header '" + line + "'");
            Tensor2 t(rows, cols);
            for (size_t r = 0; r < rows; ++r) {
                if (!std::getline(in, line))
                    throw CheckpointError(path + ": truncated tensor '" + name + "'");
                const auto fields = split(line, ' ');
                if (fields.size() != cols)
                    throw CheckpointError(path + ": tensor '" + name + "' row has " +
                                          std::to_string(fields.size()) + " values, expected " +
                                          std::to_string(cols));
                for (size_t c = 0; c < cols; ++c)
                    t.at(r, c) = parse_float(fields[c], path + " tensor " + name);
            }
            ckpt.tensors.emplace_back(std::move(name), std::move(t));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError(path + ": malformed metadata line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "kind")
            ckpt.kind = value;
        else
            ckpt.meta[key] = value;
    }
    if (!finished) throw CheckpointError(path + ": truncated file (missing end marker)");
    return ckpt;
}

Checkpoint Checkpoint::load_expect(const std::string& path, const std::string& expected_kind,
                                   uint64_t vocab_hash) {
    Checkpoint ckpt = load(path);
    if (ckpt.kind != expected_kind)
        throw CheckpointError(path + ": kind '" + ckpt.kind + "', expected '" + expected_kind +
                              "'");
    const std::string expected = hash_hex(vocab_hash);
    if (ckpt.meta_str("vocab_hash") != expected)
        throw CheckpointError(path + ": vocabulary fingerprint mismatch (checkpoint " +
                              ckpt.meta_str("vocab_hash") + ", graph " + expected + ")");
    return ckpt;
}

const Tensor2& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) { meta[key] = value; }
void Checkpoint::set_meta(const std::string& key, long value) {
    meta[key] = std::to_string(value);
}

const std::string& Checkpoint::meta_str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint missing metadata '" + key + "'");
    return it->second;
}

long Checkpoint::meta_long(const std::string& key) const {
    return parse_long(meta_str(key), "checkpoint metadata " + key);
}

// ---------------------------------------------------------------------------

namespace {

void stamp_vocab(Checkpoint& ckpt, const KnowledgeGraph& kg) {
    ckpt.set_meta("vocab_hash", hash_hex(vocab_fingerprint(kg.entities(), kg.relations())));
    ckpt.set_meta("entity_count", static_cast<long>(kg.entity_count()));
    ckpt.set_meta("relation_count", static_cast<long>(kg.relation_count()));
}

} // namespace

void save_embedding_table(const std::string& path, const EmbeddingTable& table,
                          const KnowledgeGraph& kg) {
    Checkpoint ckpt;
    ckpt.kind = "transe";
    stamp_vocab(ckpt, kg);
    ckpt.set_meta("dim", static_cast<long>(table.dim));
    ckpt.tensors.emplace_back("entity_emb", table.entity_emb);
    ckpt.tensors.emplace_back("relation_emb", table.relation_emb);
    ckpt.save(path);
}

EmbeddingTable load_embedding_table(const std::string& path, const KnowledgeGraph& kg) {
    Checkpoint ckpt = Checkpoint::load_expect(
        path, "transe", vocab_fingerprint(kg.entities(), kg.relations()));
    EmbeddingTable table;
    table.dim = static_cast<int>(ckpt.meta_long("dim"));
    table.entity_emb = ckpt.tensor("entity_emb");
    table.relation_emb = ckpt.tensor("relation_emb");
    if (table.entity_emb.rows != kg.entity_count() ||
        table.relation_emb.rows != kg.relation_vocab_size())
        throw CheckpointError(path + ": embedding row counts do not match the graph");
    return table;
}

void save_aggregator(const std::string& path, const AggregatorParams& params,
                     const EmbeddingTable& base, const AggregatorConfig& cfg,
                     const KnowledgeGraph& kg) {
    Checkpoint ckpt;
    ckpt.kind = "aggregator";
    stamp_vocab(ckpt, kg);
    ckpt.set_meta("base_dim", static_cast<long>(base.dim));
    ckpt.set_meta("d1", cfg.d1);
    ckpt.set_meta("d2", cfg.d2);
    ckpt.set_meta("k_m", cfg.k_m);
    ckpt.set_meta("k_s", cfg.k_s);
    ckpt.set_meta("meta_width", cfg.mask.active());
    ckpt.tensors.emplace_back("entity_emb", base.entity_emb);
    ckpt.tensors.emplace_back("relation_emb", base.relation_emb);
    for_each_tensor(params, [&](const std::string& name, const Tensor2& t) {
        ckpt.tensors.emplace_back(name, t);
    });
    ckpt.save(path);
}

std::pair<AggregatorParams, EmbeddingTable> load_aggregator(const std::string& path,
                                                            const AggregatorConfig& cfg,
                                                            int base_dim,
                                                            const KnowledgeGraph& kg) {
    Checkpoint ckpt = Checkpoint::load_expect(
        path, "aggregator", vocab_fingerprint(kg.entities(), kg.relations()));
    if (ckpt.meta_long("d1") != cfg.d1 || ckpt.meta_long("d2") != cfg.d2 ||
        ckpt.meta_long("k_m") != cfg.k_m || ckpt.meta_long("k_s") != cfg.k_s ||
        ckpt.meta_long("meta_width") != cfg.mask.active() ||
        ckpt.meta_long("base_dim") != base_dim)
        throw CheckpointError(path + ": aggregator dimensions do not match the configuration");

    EmbeddingTable base;
    base.dim = base_dim;
    base.entity_emb = ckpt.tensor("entity_emb");
    base.relation_emb = ckpt.tensor("relation_emb");

    AggregatorParams params = AggregatorParams::init(cfg, base_dim, 0);
    for_each_tensor(params, [&](const std::string& name, Tensor2& t) {
        const Tensor2& stored = ckpt.tensor(name);
        if (stored.rows != t.rows || stored.cols != t.cols)
            throw CheckpointError(path + ": tensor '" + name + "' has unexpected shape");
        t = stored;
    });
    return {std::move(params), std::move(base)};
}

void save_aggregated(const std::string& path, const Tensor2& entity_nei,
                     const Tensor2& relation_nei, const KnowledgeGraph& kg) {
    Checkpoint ckpt;
    ckpt.kind = "aggregated";
    stamp_vocab(ckpt, kg);
    ckpt.set_meta("dim", static_cast<long>(entity_nei.cols));
    ckpt.tensors.emplace_back("entity_nei", entity_nei);
    ckpt.tensors.emplace_back("relation_nei", relation_nei);
    ckpt.save(path);
}

std::pair<Tensor2, Tensor2> load_aggregated(const std::string& path, const KnowledgeGraph& kg) {
    Checkpoint ckpt = Checkpoint::load_expect(
        path, "aggregated", vocab_fingerprint(kg.entities(), kg.relations()));
    Tensor2 e = ckpt.tensor("entity_nei");
    Tensor2 r = ckpt.tensor("relation_nei");
    if (e.rows != kg.entity_count() || r.rows != kg.relation_count())
        throw CheckpointError(path + ": aggregated row counts do not match the graph");
    return {std::move(e), std::move(r)};
}

void save_decoder(const std::string& path, const DecoderParams& params,
                  const KnowledgeGraph& kg) {
    Checkpoint ckpt;
    ckpt.kind = "decoder";
    stamp_vocab(ckpt, kg);
    ckpt.set_meta("dim", static_cast<long>(params.entity_emb.cols));
    ckpt.set_meta("n_kernels", static_cast<long>(params.kernels.rows));
    ckpt.set_meta("lambda", format_float(params.lambda));
    ckpt.tensors.emplace_back("entity_emb", params.entity_emb);
    ckpt.tensors.emplace_back("relation_emb", params.relation_emb);
    ckpt.tensors.emplace_back("kernels", params.kernels);
    ckpt.tensors.emplace_back("w_rl", params.w_rl);
    ckpt.save(path);
}

DecoderParams load_decoder(const std::string& path, const KnowledgeGraph& kg) {
    Checkpoint ckpt = Checkpoint::load_expect(
        path, "decoder", vocab_fingerprint(kg.entities(), kg.relations()));
    DecoderParams params;
    params.entity_emb = ckpt.tensor("entity_emb");
    params.relation_emb = ckpt.tensor("relation_emb");
    params.kernels = ckpt.tensor("kernels");
    params.w_rl = ckpt.tensor("w_rl");
    params.lambda = parse_float(ckpt.meta_str("lambda"), path + " lambda");
    if (params.entity_emb.rows != kg.entity_count() ||
        params.relation_emb.rows != kg.relation_count())
        throw CheckpointError(path + ": decoder row counts do not match the graph");
    return params;
}

} // namespace rmna
