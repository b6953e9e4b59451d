#include "rmna/config.hpp"

#include <fstream>
#include <functional>

#include "rmna/util.hpp"

namespace rmna {

namespace {

struct Entry {
    std::string name;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> r;
        auto str = [&r](const std::string& name, std::string PipelineConfig::* field) {
            r.push_back({name,
                         [field](PipelineConfig& c, const std::string& v) { c.*field = v; },
                         [field](const PipelineConfig& c) { return c.*field; }});
        };
        auto integer = [&r](const std::string& name, int PipelineConfig::* field) {
            r.push_back({name,
                         [field, name](PipelineConfig& c, const std::string& v) {
                             c.*field = static_cast<int>(parse_long(v, "config key " + name));
                         },
                         [field](const PipelineConfig& c) { return std::to_string(c.*field); }});
        };
        auto real = [&r](const std::string& name, double PipelineConfig::* field) {
            r.push_back({name,
                         [field, name](PipelineConfig& c, const std::string& v) {
                             c.*field = parse_double(v, "config key " + name);
                         },
                         [field](const PipelineConfig& c) { return format_double(c.*field); }});
        };
        auto boolean = [&r](const std::string& name, bool PipelineConfig::* field) {
            r.push_back({name,
                         [field, name](PipelineConfig& c, const std::string& v) {
                             c.*field = parse_bool(v, name);
                         },
                         [field](const PipelineConfig& c) {
                             return std::string(c.*field ? "true" : "false");
                         }});
        };

        str("dataset", &PipelineConfig::dataset);
        str("train", &PipelineConfig::train_path);
        str("valid", &PipelineConfig::valid_path);
        str("test", &PipelineConfig::test_path);
        boolean("inverse_relations", &PipelineConfig::inverse_relations);
        r.push_back({"seed",
                     [](PipelineConfig& c, const std::string& v) {
                         c.seed = static_cast<uint64_t>(parse_long(v, "config key seed"));
                     },
                     [](const PipelineConfig& c) { return std::to_string(c.seed); }});
        str("norm", &PipelineConfig::norm);

        integer("l_max", &PipelineConfig::l_max);
        real("hc_min", &PipelineConfig::hc_min);
        real("conf_min", &PipelineConfig::conf_min);

        integer("dim", &PipelineConfig::dim);
        real("pre_lr", &PipelineConfig::pre_lr);
        real("pre_margin", &PipelineConfig::pre_margin);
        integer("pre_epochs", &PipelineConfig::pre_epochs);
        integer("pre_batch", &PipelineConfig::pre_batch);
        integer("pre_n_neg", &PipelineConfig::pre_n_neg);
        integer("pre_patience", &PipelineConfig::pre_patience);
        integer("pre_val_every", &PipelineConfig::pre_val_every);

        real("agg_lr", &PipelineConfig::agg_lr);
        real("margin", &PipelineConfig::margin);
        integer("k_m", &PipelineConfig::k_m);
        integer("k_s", &PipelineConfig::k_s);
        integer("d1", &PipelineConfig::d1);
        integer("d2", &PipelineConfig::d2);
        integer("d_q1", &PipelineConfig::d_q1);
        integer("d_q2", &PipelineConfig::d_q2);
        integer("d_k1", &PipelineConfig::d_k1);
        integer("d_k2", &PipelineConfig::d_k2);
        integer("d_v1", &PipelineConfig::d_v1);
        integer("d_v2", &PipelineConfig::d_v2);
        real("dropout", &PipelineConfig::dropout);
        integer("agg_epochs", &PipelineConfig::agg_epochs);
        integer("agg_batch", &PipelineConfig::agg_batch);
        integer("agg_n_neg", &PipelineConfig::agg_n_neg);
        integer("neighbor_cap", &PipelineConfig::neighbor_cap);
        boolean("freeze_base", &PipelineConfig::freeze_base);
        boolean("use_transformed", &PipelineConfig::use_transformed);
        str("ablation", &PipelineConfig::ablation);

        integer("kernels", &PipelineConfig::kernels);
        real("dec_lr", &PipelineConfig::dec_lr);
        real("dec_lambda", &PipelineConfig::dec_lambda);
        real("dec_dropout", &PipelineConfig::dec_dropout);
        integer("dec_epochs", &PipelineConfig::dec_epochs);
        integer("dec_batch", &PipelineConfig::dec_batch);
        integer("dec_n_neg", &PipelineConfig::dec_n_neg);

        str("eval_mode", &PipelineConfig::eval_mode);
        str("scorer", &PipelineConfig::scorer);
        return r;
    }();
    return entries;
}

const Entry& find_entry(const std::string& key) {
    for (const Entry& e : registry())
        if (e.name == key) return e;
    throw ConfigError("unknown configuration key '" + key + "'");
}

} // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    PipelineConfig cfg;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key(trim(stripped.substr(0, eq)));
        const std::string value(trim(stripped.substr(eq + 1)));
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    find_entry(key).set(*this, value);
}

std::string PipelineConfig::get(const std::string& key) const {
    return find_entry(key).get(*this);
}

std::string PipelineConfig::dump() const {
    std::string out;
    for (const Entry& e : registry()) out += e.name + " = " + e.get(*this) + "\n";
    return out;
}

std::vector<std::string> PipelineConfig::keys() const {
    std::vector<std::string> out;
    for (const Entry& e : registry()) out.push_back(e.name);
    return out;
}

PretrainConfig PipelineConfig::pretrain_config() const {
    PretrainConfig c;
    c.dim = dim;
    c.lr = static_cast<float>(pre_lr);
    c.margin = static_cast<float>(pre_margin);
    c.norm = norm_choice();
    c.n_neg = pre_n_neg;
    c.epochs = pre_epochs;
    c.batch_size = pre_batch;
    c.seed = Rng::mix(seed, 0x7E);
    c.patience = pre_patience;
    c.val_every = pre_val_every;
    return c;
}

MiningConfig PipelineConfig::mining_config() const {
    MiningConfig c;
    c.l_max = l_max;
    c.hc_min = hc_min;
    c.conf_min = conf_min;
    return c;
}

AggregatorConfig PipelineConfig::aggregator_config() const {
    AggregatorConfig c;
    c.d1 = d1;
    c.d2 = d2;
    c.d_q1 = d_q1;
    c.d_q2 = d_q2;
    c.d_k1 = d_k1;
    c.d_k2 = d_k2;
    c.d_v1 = d_v1;
    c.d_v2 = d_v2;
    c.k_m = k_m;
    c.k_s = k_s;
    c.lr = static_cast<float>(agg_lr);
    c.margin = static_cast<float>(margin);
    c.dropout = static_cast<float>(dropout);
    c.epochs = agg_epochs;
    c.batch_size = agg_batch;
    c.n_neg = agg_n_neg;
    c.neighbor_cap = neighbor_cap;
    c.freeze_base = freeze_base;
    c.norm = norm_choice();
    c.mask = FeatureMask::from_ablation(ablation);
    c.seed = Rng::mix(seed, 0xA6);
    return c;
}

DecoderConfig PipelineConfig::decoder_config() const {
    DecoderConfig c;
    c.n_kernels = kernels;
    c.lr = static_cast<float>(dec_lr);
    c.lambda = static_cast<float>(dec_lambda);
    c.dropout = static_cast<float>(dec_dropout);
    c.epochs = dec_epochs;
    c.batch_size = dec_batch;
    c.n_neg = dec_n_neg;
    c.seed = Rng::mix(seed, 0xDE);
    return c;
}

} // namespace rmna
