// taxreg: validate taxonomies, compile their constraints to circuits, mask
// and synthesize datasets, train/evaluate the regularized classifiers, and
// inspect per-batch backbone graphs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "taxreg/circuit.hpp"
#include "taxreg/data.hpp"
#include "taxreg/gcnreg.hpp"
#include "taxreg/logic.hpp"
#include "taxreg/semloss.hpp"
#include "taxreg/taxonomy.hpp"
#include "taxreg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw taxreg::Error("cannot open `" + path + "`");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw taxreg::Error("cannot write `" + path + "`");
    out << content;
}

std::vector<double> parse_rates(const std::string& s) {
    std::vector<double> out;
    const char* p = s.c_str();
    while (true) {
        char* stop = nullptr;
        double v = std::strtod(p, &stop);
        if (stop == p) throw taxreg::Error("bad --rates value `" + s + "`");
        out.push_back(v);
        p = stop;
        if (*p == ',') ++p;
        else if (*p == '\0') break;
        else throw taxreg::Error("bad --rates value `" + s + "`");
    }
    return out;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
    std::vector<uint64_t> out;
    const char* p = s.c_str();
    while (true) {
        char* stop = nullptr;
        unsigned long long v = std::strtoull(p, &stop, 10);
        if (stop == p) throw taxreg::Error("bad --seeds value `" + s + "`");
        out.push_back(v);
        p = stop;
        if (*p == ',') ++p;
        else if (*p == '\0') break;
        else throw taxreg::Error("bad --seeds value `" + s + "`");
    }
    return out;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw taxreg::Error(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
    taxreg::Taxonomy tax = taxreg::Taxonomy::parse(read_file(path));
    std::cout << tax.num_classes() << " leaves, depth " << tax.depth() << "\n";
    return 0;
}

int cmd_compile(const std::string& path, bool dump_circuits) {
    taxreg::Taxonomy tax = taxreg::Taxonomy::parse(read_file(path));
    bool all_ok = true;
    int compiled = 0;
    for (int level = 0; level <= tax.depth(); ++level) {
        for (int id : tax.level_nodes(level)) {
            if (tax.node(id).is_leaf()) continue;
            taxreg::Sentence s = taxreg::node_sentence(tax, id);
            taxreg::Circuit c = taxreg::compile(s);
            taxreg::StructureReport rep = taxreg::check_structure(c);
            ++compiled;
            std::cout << tax.node(id).name << ": scope=" << s.scope().size()
                      << " nodes=" << rep.node_count << " edges=" << rep.edge_count
                      << " depth=" << rep.depth
                      << " smooth=" << (rep.smooth ? "ok" : "VIOLATED")
                      << " decomposable=" << (rep.decomposable ? "ok" : "VIOLATED")
                      << " deterministic=" << (rep.deterministic ? "ok" : "VIOLATED")
                      << "(" << rep.determinism_method << ")\n";
            for (const auto& v : rep.violations) std::cout << "  ! " << v << "\n";
            if (dump_circuits) {
                std::cout << "  " << s.debug_string() << "\n";
                std::istringstream lines(taxreg::dump(c));
                std::string line;
                while (std::getline(lines, line)) std::cout << "  " << line << "\n";
            }
            all_ok = all_ok && rep.ok();
        }
    }
    std::cout << compiled << " circuits compiled\n";
    if (!all_ok) {
        std::cerr << "error: structural violations found\n";
        return 1;
    }
    return 0;
}

int cmd_mask(const std::string& tax_path, const std::string& data_path, const std::string& rates,
             uint64_t seed, const std::string& out_path) {
    taxreg::Taxonomy tax = taxreg::Taxonomy::parse(read_file(tax_path));
    std::vector<taxreg::SupervisionRecord> records =
        taxreg::load_dataset(read_file(data_path), tax);
    taxreg::MaskingPolicy policy{parse_rates(rates), seed};
    std::vector<taxreg::SupervisionRecord> masked = taxreg::apply_masking(records, tax, policy);

    std::map<int, size_t> by_level;  // known_node level -> count
    for (const auto& r : masked) ++by_level[tax.node(r.known_node).level];
    for (const auto& [level, count] : by_level) {
        double pct = 100.0 * static_cast<double>(count) / static_cast<double>(masked.size());
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", pct);
        if (level == tax.depth())
            std::cerr << "kept leaf label: " << count << " (" << buf << "%)\n";
        else
            std::cerr << "known to level " << level << ": " << count << " (" << buf << "%)\n";
    }

    std::string out = taxreg::serialize_dataset(masked, tax);
    if (out_path.empty())
        std::cout << out;
    else
        write_file(out_path, out);
    return 0;
}

struct SynthFile {
    taxreg::SynthSpec spec;
    double test_fraction = 0.0;
};

SynthFile parse_synth_spec(const json& j) {
    SynthFile out;
    if (!j.contains("dim")) throw taxreg::Error("synth spec: missing `dim`");
    out.spec.dim = j.at("dim").get<int>();
    out.spec.spread = j.value("spread", 1.0);
    out.spec.seed = j.value("seed", uint64_t{0});
    if (!j.contains("level_scales")) throw taxreg::Error("synth spec: missing `level_scales`");
    out.spec.level_scales = j.at("level_scales").get<std::vector<double>>();
    if (j.contains("counts")) {
        out.spec.counts = j.at("counts").get<std::vector<int>>();
    } else if (j.contains("power_law")) {
        const json& pl = j.at("power_law");
        taxreg::PowerLaw p;
        p.head = pl.value("head", 400);
        p.alpha = pl.value("alpha", 1.0);
        p.min_count = pl.value("min", 2);
        out.spec.power_law = p;
    } else {
        throw taxreg::Error("synth spec: need `counts` or `power_law`");
    }
    out.test_fraction = j.value("test_fraction", 0.0);
    return out;
}

int cmd_synth(const std::string& tax_path, const std::string& spec_path, const std::string& out_path,
              const std::string& test_out_path) {
    taxreg::Taxonomy tax = taxreg::Taxonomy::parse(read_file(tax_path));
    SynthFile sf = parse_synth_spec(parse_json(read_file(spec_path), "synth spec"));
    std::vector<taxreg::SupervisionRecord> records = taxreg::synth_generate(tax, sf.spec);

    if (sf.test_fraction > 0.0) {
        if (out_path.empty() || test_out_path.empty())
            throw taxreg::Error("synth with test_fraction needs both -o and --test-out");
        auto [train, test] = taxreg::split_train_test(records, sf.test_fraction);
        write_file(out_path, taxreg::serialize_dataset(train, tax));
        write_file(test_out_path, taxreg::serialize_dataset(test, tax));
        std::cerr << train.size() << " train records, " << test.size() << " test records\n";
    } else {
        std::string out = taxreg::serialize_dataset(records, tax);
        if (out_path.empty())
            std::cout << out;
        else
            write_file(out_path, out);
        std::cerr << records.size() << " records\n";
    }
    return 0;
}

struct TrainOverrides {
    std::string method, out_dir, seeds;
    std::optional<double> w, lr;
    std::optional<int> epochs, batch;
};

int cmd_train(const std::string& config_path, const TrainOverrides& ov) {
    json cfg = parse_json(read_file(config_path), "config");
    fs::path base = fs::path(config_path).parent_path();
    auto resolve = [&](const std::string& p) { return (base / p).string(); };

    if (!cfg.contains("taxonomy")) throw taxreg::Error("config: missing `taxonomy`");
    taxreg::Taxonomy tax =
        taxreg::Taxonomy::parse(read_file(resolve(cfg.at("taxonomy").get<std::string>())));

    taxreg::TrainConfig tc;
    tc.method = taxreg::method_from_name(
        !ov.method.empty() ? ov.method : cfg.value("method", std::string("baseline")));
    tc.w = ov.w ? *ov.w : cfg.value("w", 0.1);
    tc.epochs = ov.epochs ? *ov.epochs : cfg.value("epochs", 10);
    tc.batch_size = ov.batch ? *ov.batch : cfg.value("batch_size", 32);
    tc.learning_rate = ov.lr ? *ov.lr : cfg.value("learning_rate", 0.1);
    tc.epsilon = cfg.value("epsilon", 1e-12);
    tc.semi_sum_levels = cfg.value("semi_sum_levels", false);
    tc.gcn_layers = cfg.value("gcn_layers", 1);
    tc.gcn_hidden = cfg.value("gcn_hidden", 16);
    tc.gcn_init_scale = cfg.value("gcn_init_scale", 0.1);

    std::vector<uint64_t> seeds;
    if (!ov.seeds.empty())
        seeds = parse_seeds(ov.seeds);
    else if (cfg.contains("seeds"))
        seeds = cfg.at("seeds").get<std::vector<uint64_t>>();
    else
        seeds = {1, 2, 3};
    if (seeds.empty()) throw taxreg::Error("config: empty seed list");

    std::string out_dir =
        !ov.out_dir.empty() ? ov.out_dir : cfg.value("out_dir", std::string("."));
    fs::create_directories(out_dir);

    // Data: synthesized or loaded.
    std::vector<taxreg::SupervisionRecord> train_records, test_records;
    bool have_test = false;
    if (cfg.contains("synth")) {
        SynthFile sf = parse_synth_spec(cfg.at("synth"));
        std::vector<taxreg::SupervisionRecord> all = taxreg::synth_generate(tax, sf.spec);
        if (sf.test_fraction > 0.0) {
            auto [tr, te] = taxreg::split_train_test(all, sf.test_fraction);
            train_records = std::move(tr);
            test_records = std::move(te);
            have_test = true;
        } else {
            train_records = std::move(all);
        }
    } else {
        if (!cfg.contains("train")) throw taxreg::Error("config: missing `train` (or `synth`)");
        train_records = taxreg::load_dataset(read_file(resolve(cfg.at("train").get<std::string>())), tax);
    }
    if (cfg.contains("test")) {
        test_records = taxreg::load_dataset(read_file(resolve(cfg.at("test").get<std::string>())), tax);
        have_test = true;
    }

    if (cfg.contains("mask")) {
        const json& m = cfg.at("mask");
        taxreg::MaskingPolicy policy;
        policy.rates = m.at("rates").get<std::vector<double>>();
        policy.seed = m.value("seed", uint64_t{0});
        train_records = taxreg::apply_masking(train_records, tax, policy);
    }

    size_t labeled = 0;
    for (const auto& r : train_records) labeled += r.leaf_label ? 1 : 0;

    ordered_json report;
    report["schema_version"] = taxreg::kSchemaVersion;
    report["method"] = taxreg::method_name(tc.method);
    report["w"] = tc.w;
    report["epochs"] = tc.epochs;
    report["batch_size"] = tc.batch_size;
    report["learning_rate"] = tc.learning_rate;
    report["train_records"] = train_records.size();
    report["labeled"] = labeled;
    report["unlabeled"] = train_records.size() - labeled;
    if (have_test) report["test_records"] = test_records.size();
    report["seeds"] = ordered_json::array();

    struct SeedOutcome {
        uint64_t seed;
        taxreg::TrainResult result;
        std::optional<taxreg::MetricsReport> metrics;
    };
    std::vector<SeedOutcome> outcomes;
    for (uint64_t seed : seeds) {
        taxreg::TrainResult r = taxreg::train_one(tc, train_records, tax, seed);
        write_file((fs::path(out_dir) / ("history_" + std::to_string(seed) + ".csv")).string(),
                   taxreg::history_csv(r.history));
        SeedOutcome oc{seed, std::move(r), std::nullopt};
        ordered_json row;
        row["seed"] = seed;
        row["final_loss"] = oc.result.history.back().loss;
        if (have_test) {
            oc.metrics = taxreg::evaluate(oc.result.state.clf, test_records, tax);
            row["accuracy"] = oc.metrics->accuracy;
            row["macro_avg_f1"] = oc.metrics->macro_avg_f1;
            row["weighted_avg_f1"] = oc.metrics->weighted_avg_f1;
            std::cout << "seed " << seed << ": macro_f1=" << taxreg::format_double(oc.metrics->macro_avg_f1)
                      << " acc=" << taxreg::format_double(oc.metrics->accuracy) << "\n";
        } else {
            std::cout << "seed " << seed
                      << ": final_loss=" << taxreg::format_double(oc.result.history.back().loss)
                      << "\n";
        }
        report["seeds"].push_back(std::move(row));
        outcomes.push_back(std::move(oc));
    }

    // Best-of-seeds selection: highest macro F1 when a test set exists,
    // lowest final loss otherwise. Ties keep the earliest seed.
    size_t best = 0;
    for (size_t i = 1; i < outcomes.size(); ++i) {
        if (have_test) {
            if (outcomes[i].metrics->macro_avg_f1 > outcomes[best].metrics->macro_avg_f1) best = i;
        } else {
            if (outcomes[i].result.history.back().loss < outcomes[best].result.history.back().loss)
                best = i;
        }
    }

    ordered_json bj;
    bj["seed"] = outcomes[best].seed;
    if (have_test) {
        ordered_json mj = taxreg::metrics_to_json(*outcomes[best].metrics);
        for (auto& [k, v] : mj.items()) bj[k] = v;
    } else {
        bj["final_loss"] = outcomes[best].result.history.back().loss;
    }
    report["best"] = std::move(bj);

    outcomes[best].result.state.clf.seed = outcomes[best].seed;
    write_file((fs::path(out_dir) / "model.json").string(),
               taxreg::save_model(outcomes[best].result.state.clf, tax));
    write_file((fs::path(out_dir) / "report.json").string(), report.dump(2) + "\n");
    std::cout << "best seed: " << outcomes[best].seed << "\n";
    std::cout << "wrote " << (fs::path(out_dir) / "report.json").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_path) {
    taxreg::LoadedModel m = taxreg::load_model(read_file(model_path));
    std::vector<taxreg::SupervisionRecord> test =
        taxreg::load_dataset(read_file(test_path), m.tax);
    taxreg::MetricsReport rep = taxreg::evaluate(m.params, test, m.tax);
    ordered_json j;
    j["schema_version"] = taxreg::kSchemaVersion;
    ordered_json mj = taxreg::metrics_to_json(rep);
    for (auto& [k, v] : mj.items()) j[k] = v;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_inspect_graph(const std::string& tax_path, const std::string& data_path,
                      uint64_t batch_seed, int batch_size) {
    taxreg::Taxonomy tax = taxreg::Taxonomy::parse(read_file(tax_path));
    std::vector<taxreg::SupervisionRecord> records =
        taxreg::load_dataset(read_file(data_path), tax);
    if (records.empty()) throw taxreg::Error("inspect-graph: empty dataset");
    if (batch_size <= 0) throw taxreg::Error("inspect-graph: batch size must be positive");

    std::vector<size_t> order(records.size());
    std::iota(order.begin(), order.end(), size_t{0});
    taxreg::Rng rng(taxreg::shuffle_stream(batch_seed));
    rng.shuffle(order);

    std::vector<taxreg::SupervisionRecord> batch;
    for (size_t k = 0; k < std::min(order.size(), static_cast<size_t>(batch_size)); ++k)
        batch.push_back(records[order[k]]);

    taxreg::BackboneGraph g = taxreg::build_backbone(tax, batch);
    std::cout << "backbone: " << g.n_tax << " taxonomy rows + " << g.n_doc << " document rows\n";
    std::map<int, int> hist;
    for (int i = 0; i < g.rows(); ++i) {
        int degree = static_cast<int>(g.A.row(i).sum());
        ++hist[degree];
        if (i < g.n_tax) {
            const taxreg::TaxNode& n = tax.node(g.tax_row_ids[static_cast<size_t>(i)]);
            std::cout << "row " << i << ": " << n.name << " (level " << n.level << ") degree "
                      << degree << "\n";
        } else {
            const taxreg::SupervisionRecord& r = batch[static_cast<size_t>(i - g.n_tax)];
            std::cout << "row " << i << ": doc " << r.id << " -> "
                      << tax.node(r.known_node).name << " degree " << degree << "\n";
        }
    }
    std::cout << "degree histogram:\n";
    for (const auto& [degree, count] : hist) std::cout << "  " << degree << ": " << count << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"taxonomy-constrained classifier toolkit"};
    app.require_subcommand(1);

    std::string tax_path, data_path, spec_path, out_path, test_out_path, model_path, config_path,
        rates;
    uint64_t seed = 0, batch_seed = 0;
    int batch_size = 32;
    bool dump_circuits = false;
    TrainOverrides ov;

    auto* validate = app.add_subcommand("validate-tax", "parse and validate a taxonomy file");
    validate->add_option("file", tax_path, "taxonomy file")->required();

    auto* compile = app.add_subcommand("compile", "compile taxonomy constraints to circuits");
    compile->add_option("taxonomy", tax_path, "taxonomy file")->required();
    compile->add_flag("--dump", dump_circuits, "print every circuit node");

    auto* mask = app.add_subcommand("mask", "mask labels per level rates");
    mask->add_option("taxonomy", tax_path)->required();
    mask->add_option("data", data_path)->required();
    mask->add_option("--rates", rates, "per-level rates, e.g. 0,0.6,0.8")->required();
    mask->add_option("--seed", seed, "masking seed");
    mask->add_option("-o,--out", out_path, "output path (stdout if omitted)");

    auto* synth = app.add_subcommand("synth", "generate synthetic hierarchical data");
    synth->add_option("taxonomy", tax_path)->required();
    synth->add_option("--spec", spec_path, "synthesis spec JSON")->required();
    synth->add_option("-o,--out", out_path, "output path (stdout if omitted)");
    synth->add_option("--test-out", test_out_path, "test split output path");

    auto* train = app.add_subcommand("train", "train a classifier per a config file");
    train->add_option("config", config_path, "experiment config JSON")->required();
    train->add_option("--method", ov.method, "baseline|symbolic|gcn|l1only");
    double w_flag = 0.0, lr_flag = 0.0;
    int epochs_flag = 0, batch_flag = 0;
    auto* wopt = train->add_option("--w", w_flag, "regularizer weight");
    auto* lropt = train->add_option("--lr", lr_flag, "learning rate");
    auto* eopt = train->add_option("--epochs", epochs_flag, "training epochs");
    auto* bopt = train->add_option("--batch-size", batch_flag, "batch size");
    train->add_option("--out-dir", ov.out_dir, "artifact directory");
    train->add_option("--seeds", ov.seeds, "comma-separated seed list");

    auto* eval = app.add_subcommand("eval", "evaluate a model artifact on a test set");
    eval->add_option("model", model_path)->required();
    eval->add_option("test", data_path)->required();

    auto* inspect = app.add_subcommand("inspect-graph", "dump a batch backbone graph");
    inspect->add_option("taxonomy", tax_path)->required();
    inspect->add_option("data", data_path)->required();
    inspect->add_option("--batch-seed", batch_seed, "training seed whose first batch to build")
        ->required();
    inspect->add_option("--batch-size", batch_size, "batch size (default 32)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*validate) return cmd_validate(tax_path);
        if (*compile) return cmd_compile(tax_path, dump_circuits);
        if (*mask) return cmd_mask(tax_path, data_path, rates, seed, out_path);
        if (*synth) return cmd_synth(tax_path, spec_path, out_path, test_out_path);
        if (*train) {
            if (wopt->count()) ov.w = w_flag;
            if (lropt->count()) ov.lr = lr_flag;
            if (eopt->count()) ov.epochs = epochs_flag;
            if (bopt->count()) ov.batch = batch_flag;
            return cmd_train(config_path, ov);
        }
        if (*eval) return cmd_eval(model_path, data_path);
        if (*inspect) return cmd_inspect_graph(tax_path, data_path, batch_seed, batch_size);
    } catch (const taxreg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
