#include "mtm/cli/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "mtm/data/synth.hpp"
#include "mtm/data/transform.hpp"
#include "mtm/diff/grad_check.hpp"
#include "mtm/errors.hpp"
#include "mtm/model/train.hpp"

namespace mtm::cli {

namespace {

using nlohmann::json;

std::string slurp(const std::string& path, bool config) {
    std::ifstream in(path);
    if (!in) {
        std::string msg = "cannot open file: " + path;
        if (config) throw ConfigError(msg);
        throw DataError(msg);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_config_file(const std::string& path) {
    try {
        return json::parse(slurp(path, true));
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

std::string ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

std::string dump2(const json& j) { return j.dump(2) + "\n"; }

// Strict readers shared by the config-shaped JSON blocks below.
void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok |= it.key() == k;
        if (!ok) throw ConfigError(what + ": unknown key \"" + it.key() + "\"");
    }
    if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
}

double as_num(const json& j, const char* key, const std::string& what) {
    if (!j.at(key).is_number()) throw ConfigError(what + ": \"" + key + "\" must be a number");
    return j.at(key).get<double>();
}

long long as_int(const json& j, const char* key, const std::string& what) {
    if (!j.at(key).is_number_integer())
        throw ConfigError(what + ": \"" + key + "\" must be an integer");
    return j.at(key).get<long long>();
}

std::uint64_t as_u64(const json& j, const char* key, const std::string& what) {
    long long v = as_int(j, key, what);
    if (v < 0) throw ConfigError(what + ": \"" + key + "\" must be non-negative");
    return std::uint64_t(v);
}

// ---- synth ----------------------------------------------------------------

json synth_to_json(const data::SynthSpec& s) {
    return json{{"n_samples", s.n_samples},
                {"n_channels", s.n_channels},
                {"classes", s.classes},
                {"events_per_channel", s.events_per_channel},
                {"alpha", s.alpha},
                {"f_min", s.f_min},
                {"f_max", s.f_max},
                {"noise_sd", s.noise_sd},
                {"duration", s.duration},
                {"seed", s.seed}};
}

data::SynthSpec synth_from_json(const json& j) {
    const std::string what = "synth spec";
    reject_unknown(j,
                   {"n_samples", "n_channels", "classes", "events_per_channel", "alpha", "f_min",
                    "f_max", "noise_sd", "duration", "seed"},
                   what);
    data::SynthSpec s;
    if (j.contains("n_samples")) s.n_samples = int(as_int(j, "n_samples", what));
    if (j.contains("n_channels")) s.n_channels = int(as_int(j, "n_channels", what));
    if (j.contains("classes")) s.classes = int(as_int(j, "classes", what));
    if (j.contains("events_per_channel"))
        s.events_per_channel = int(as_int(j, "events_per_channel", what));
    if (j.contains("alpha")) s.alpha = as_num(j, "alpha", what);
    if (j.contains("f_min")) s.f_min = as_num(j, "f_min", what);
    if (j.contains("f_max")) s.f_max = as_num(j, "f_max", what);
    if (j.contains("noise_sd")) s.noise_sd = as_num(j, "noise_sd", what);
    if (j.contains("duration")) s.duration = as_num(j, "duration", what);
    if (j.contains("seed")) s.seed = as_u64(j, "seed", what);
    if (s.n_samples < 1 || s.n_channels < 1 || s.classes < 2 || s.events_per_channel < 1)
        throw ConfigError(what + ": counts must be positive and classes >= 2");
    if (s.alpha < 0.0 || s.alpha > 1.0) throw ConfigError(what + ": alpha must lie in [0, 1]");
    return s;
}

json cooccurrence_manifest(const std::vector<data::EventSeries>& ds, int n_channels) {
    std::vector<std::size_t> hist(std::size_t(n_channels) + 1, 0);
    std::size_t total = 0, multi = 0;
    for (const data::EventSeries& s : ds) {
        data::DenseView v = data::to_dense(s);
        std::size_t C = v.observed.shape[1];
        for (std::size_t i = 0; i < v.n_times(); ++i) {
            std::size_t k = 0;
            for (std::size_t j = 0; j < C; ++j) k += v.observed.at(i * C + j) ? 1 : 0;
            if (k < hist.size()) ++hist[k];
            ++total;
            if (k >= 2) ++multi;
        }
    }
    return json{{"observed_channels_histogram", hist},
                {"timepoints", total},
                {"multi_observed_fraction", total ? double(multi) / double(total) : 0.0}};
}

int cmd_synth(const data::SynthSpec& spec, const std::string& out) {
    ensure_out_dir(out);
    std::vector<data::EventSeries> ds = data::synth_generate(spec);
    data::save_ndjson(out + "/dataset.ndjson", ds);

    std::vector<std::size_t> label_counts(std::size_t(spec.classes), 0);
    for (const data::EventSeries& s : ds)
        if (s.label >= 0 && std::size_t(s.label) < label_counts.size()) ++label_counts[s.label];

    json manifest{{"spec", synth_to_json(spec)},
                  {"n_samples", ds.size()},
                  {"label_counts", label_counts},
                  {"cooccurrence", cooccurrence_manifest(ds, spec.n_channels)}};
    write_text(out + "/config.json", dump2(synth_to_json(spec)));
    write_text(out + "/manifest.json", dump2(manifest));
    std::cout << dump2(manifest);
    return 0;
}

// ---- train / eval ---------------------------------------------------------

json report_to_json(const metrics::MetricsReport& r) { return report_json(r); }

json split_to_json(const data::SplitSpec& s) {
    return json{{"subset_id", s.subset_id},
                {"seed", s.seed},
                {"train_frac", s.train_frac},
                {"val_frac", s.val_frac},
                {"test_frac", s.test_frac}};
}

data::SplitSpec split_from_json(const json& j) {
    const std::string what = "split spec";
    reject_unknown(j, {"subset_id", "seed", "train_frac", "val_frac", "test_frac"}, what);
    data::SplitSpec s;
    if (j.contains("subset_id")) s.subset_id = int(as_int(j, "subset_id", what));
    if (j.contains("seed")) s.seed = as_u64(j, "seed", what);
    if (j.contains("train_frac")) s.train_frac = as_num(j, "train_frac", what);
    if (j.contains("val_frac")) s.val_frac = as_num(j, "val_frac", what);
    if (j.contains("test_frac")) s.test_frac = as_num(j, "test_frac", what);
    return s;
}

struct TrainRun {
    model::ModelConfig model;
    std::string data;
    data::SplitSpec split;
    double mask_ratio = 0.0;
};

json train_run_to_json(const TrainRun& r) {
    return json{{"model", model::config_to_json(r.model)},
                {"data", r.data},
                {"split", split_to_json(r.split)},
                {"mask_ratio", r.mask_ratio}};
}

TrainRun train_run_from_json(const json& j) {
    const std::string what = "train config";
    reject_unknown(j, {"model", "data", "split", "mask_ratio"}, what);
    TrainRun r;
    if (j.contains("model")) r.model = model::config_from_json(j.at("model"));
    if (j.contains("data")) {
        if (!j.at("data").is_string()) throw ConfigError(what + ": \"data\" must be a string");
        r.data = j.at("data").get<std::string>();
    }
    if (j.contains("split")) r.split = split_from_json(j.at("split"));
    if (j.contains("mask_ratio")) r.mask_ratio = as_num(j, "mask_ratio", what);
    if (r.mask_ratio < 0.0 || r.mask_ratio >= 1.0)
        throw ConfigError(what + ": mask_ratio must lie in [0, 1)");
    return r;
}

json history_json(const std::vector<model::EpochStats>& history) {
    json out = json::array();
    for (const model::EpochStats& es : history) {
        json e{{"epoch", es.epoch}, {"train_loss", es.train_loss}};
        if (es.val_report.n_samples > 0) {
            e["val_metric"] = es.val_metric;
            e["val"] = report_to_json(es.val_report);
        }
        out.push_back(std::move(e));
    }
    return out;
}

int cmd_train(const TrainRun& run, const std::string& out) {
    ensure_out_dir(out);
    write_text(out + "/config.json", dump2(train_run_to_json(run)));

    std::vector<data::EventSeries> ds = data::load_ndjson(run.data);
    if (run.mask_ratio > 0.0) ds = data::mask_channels(ds, run.mask_ratio, run.model.seed);
    data::Splits splits = data::split(ds, run.split);

    model::TrainOptions opts;
    opts.on_epoch = [](const model::EpochStats& es) {
        std::ostringstream line;
        line << "epoch " << es.epoch << " train_loss " << es.train_loss;
        if (es.val_report.n_samples > 0) line << " val_metric " << es.val_metric;
        std::cerr << line.str() << "\n";
    };
    model::TrainResult result = model::train(splits, run.model, opts);

    model::save_checkpoint(result.checkpoint, out + "/checkpoint.json");
    data::save_ndjson(out + "/test.ndjson", splits.test);
    write_text(out + "/history.json", dump2(history_json(result.history)));

    metrics::MetricsReport report = model::evaluate(result.checkpoint, splits.test);
    std::string text = dump2(report_to_json(report));
    write_text(out + "/metrics.json", text);
    std::cout << text;
    return 0;
}

struct EvalRun {
    std::string checkpoint;
    std::string data;
    double mask_ratio = 0.0;
    std::uint64_t seed = 0; // drives channel masking only
};

json eval_run_to_json(const EvalRun& r) {
    return json{{"checkpoint", r.checkpoint},
                {"data", r.data},
                {"mask_ratio", r.mask_ratio},
                {"seed", r.seed}};
}

EvalRun eval_run_from_json(const json& j) {
    const std::string what = "eval config";
    reject_unknown(j, {"checkpoint", "data", "mask_ratio", "seed"}, what);
    EvalRun r;
    if (j.contains("checkpoint")) r.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("data")) r.data = j.at("data").get<std::string>();
    if (j.contains("mask_ratio")) r.mask_ratio = as_num(j, "mask_ratio", what);
    if (j.contains("seed")) r.seed = as_u64(j, "seed", what);
    if (r.mask_ratio < 0.0 || r.mask_ratio >= 1.0)
        throw ConfigError(what + ": mask_ratio must lie in [0, 1)");
    return r;
}

int cmd_eval(const EvalRun& run, const std::string& out) {
    model::Checkpoint ck = model::load_checkpoint(run.checkpoint);
    std::vector<data::EventSeries> ds = data::load_ndjson(run.data);
    if (run.mask_ratio > 0.0) ds = data::mask_channels(ds, run.mask_ratio, run.seed);

    metrics::MetricsReport report = model::evaluate(ck, ds);
    std::string text = dump2(report_to_json(report));
    if (!out.empty()) {
        ensure_out_dir(out);
        write_text(out + "/config.json", dump2(eval_run_to_json(run)));
        write_text(out + "/metrics.json", text);
    }
    std::cout << text;
    return 0;
}

// ---- gradcheck --------------------------------------------------------------

// Deterministic toy sample: increasing times, every timepoint observes at
// least one channel, values in a small range.
data::DenseView gradcheck_view(std::size_t T, std::size_t C, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xABCDEF1234567890ull);
    std::uniform_real_distribution<double> val(-1.5, 1.5);
    std::bernoulli_distribution coin(0.7);
    std::uniform_int_distribution<std::size_t> pick(0, C - 1);
    data::DenseView v;
    v.values = diff::Array::zeros({T, C});
    std::vector<std::uint8_t> bits(T * C, 0);
    for (std::size_t i = 0; i < T; ++i) {
        v.times.push_back(0.1 + 0.2 * double(i));
        for (std::size_t j = 0; j < C; ++j) bits[i * C + j] = coin(rng) ? 1 : 0;
        bits[i * C + pick(rng)] = 1;
        for (std::size_t j = 0; j < C; ++j)
            if (bits[i * C + j]) v.values.data[i * C + j] = val(rng);
    }
    v.observed = diff::Mask{{T, C}, std::move(bits)};
    return v;
}

struct GradcheckRun {
    model::ModelConfig model;
    std::size_t timepoints = 5;
    double step = 1e-5;
    double rtol = 1e-4;
    std::size_t max_per_group = 6;
};

json gradcheck_run_to_json(const GradcheckRun& r) {
    return json{{"model", model::config_to_json(r.model)},
                {"timepoints", r.timepoints},
                {"step", r.step},
                {"rtol", r.rtol},
                {"max_per_group", r.max_per_group}};
}

GradcheckRun gradcheck_run_from_json(const json& j) {
    const std::string what = "gradcheck config";
    reject_unknown(j, {"model", "timepoints", "step", "rtol", "max_per_group"}, what);
    GradcheckRun r;
    if (j.contains("model")) r.model = model::config_from_json(j.at("model"));
    if (j.contains("timepoints")) r.timepoints = std::size_t(as_u64(j, "timepoints", what));
    if (j.contains("step")) r.step = as_num(j, "step", what);
    if (j.contains("rtol")) r.rtol = as_num(j, "rtol", what);
    if (j.contains("max_per_group"))
        r.max_per_group = std::size_t(as_u64(j, "max_per_group", what));
    return r;
}

int cmd_gradcheck(GradcheckRun run, const std::string& out) {
    model::ModelConfig& cfg = run.model;
    if (cfg.n_channels == 0) cfg.n_channels = 2;
    if (cfg.n_classes == 0) cfg.n_classes = 2;
    cfg.validate();
    if (run.timepoints < 2 || run.timepoints > 16)
        throw ConfigError("gradcheck timepoints must lie in [2, 16]");

    model::MtmParams init = model::MtmParams::init(cfg);
    if (init.total_size() > 200000)
        throw ConfigError("gradcheck model too large for finite differences; shrink dims");

    data::DenseView view = gradcheck_view(run.timepoints, cfg.n_channels, cfg.seed);
    std::vector<std::pair<std::string, diff::Array>> named(init.groups.begin(),
                                                           init.groups.end());
    model::ModelConfig cfg_copy = cfg;
    diff::TapeFn f = [&view, cfg_copy](diff::Tape& t, const std::vector<diff::Var>& vs) {
        // A fixed local stream keeps non-CLS pivotal selection identical
        // across every finite-difference probe.
        std::mt19937_64 rng(cfg_copy.seed * 0x9E3779B97F4A7C15ull + 1);
        diff::Var logits = model::forward_logits(t, view, vs, cfg_copy, false, &rng);
        return model::loss_ce(logits, 0);
    };
    diff::GradCheckReport rep = diff::grad_check(f, named, run.step, run.rtol, run.max_per_group);

    json groups = json::array();
    for (const diff::GradCheckGroup& g : rep.groups)
        groups.push_back(json{{"name", g.name},
                              {"max_rel_err", g.max_rel_err},
                              {"n_checked", g.n_checked},
                              {"pass", g.pass}});
    json j{{"pass", rep.pass},
           {"step", rep.step},
           {"rtol", rep.rtol},
           {"max_rel_err", rep.max_rel_err},
           {"worst_group", rep.worst_group},
           {"groups", groups}};
    std::string text = dump2(j);
    if (!out.empty()) {
        ensure_out_dir(out);
        write_text(out + "/config.json", dump2(gradcheck_run_to_json(run)));
        write_text(out + "/gradcheck.json", text);
    }
    std::cout << text;
    if (!rep.pass) {
        std::ostringstream msg;
        msg << "gradient check failed: group " << rep.worst_group << " max relative error "
            << rep.max_rel_err << " exceeds rtol " << rep.rtol;
        throw NumericError(msg.str());
    }
    return 0;
}

// ---- dump-attention ---------------------------------------------------------

json matrix_json(const diff::Array& a) {
    json rows = json::array();
    std::size_t n = a.shape.size() == 2 ? a.shape[0] : 1;
    std::size_t m = a.shape.size() == 2 ? a.shape[1] : a.size();
    for (std::size_t i = 0; i < n; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m; ++j) row.push_back(a.data[i * m + j]);
        rows.push_back(std::move(row));
    }
    return rows;
}

json mask_rows_json(const diff::Mask& grid_mask) {
    // Grid masks carry the CLS row first; emit only the timepoint rows.
    std::size_t C = grid_mask.shape[1];
    std::size_t T = grid_mask.shape[0] - 1;
    json rows = json::array();
    for (std::size_t i = 0; i < T; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < C; ++j) row.push_back(int(grid_mask.bits[(i + 1) * C + j]));
        rows.push_back(std::move(row));
    }
    return rows;
}

json bits_rows_json(const std::vector<std::uint8_t>& bits, std::size_t C) {
    json rows = json::array();
    for (std::size_t i = 0; i * C < bits.size(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < C; ++j) row.push_back(int(bits[i * C + j]));
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_dump_attention(const std::string& ck_path, const std::string& data_path,
                       const std::string& id, const std::string& out) {
    model::Checkpoint ck = model::load_checkpoint(ck_path);
    std::vector<data::EventSeries> ds = data::load_ndjson(data_path);

    std::size_t index = ds.size();
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds[i].id == id) {
            index = i;
            break;
        }
    if (index == ds.size()) throw DataError("unknown sample id: " + id);

    std::vector<data::EventSeries> one{ds[index]};
    data::apply_stats(one, ck.stats);
    data::DenseView view = data::to_dense(one[0]);

    const model::ModelConfig& cfg = ck.params.config;
    // Mirrors evaluation's per-sample stream so the dump shows exactly what
    // an eval pass computes for this sample.
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + index);
    layers::AttnTrace trace;
    diff::Array logits = model::predict_logits(ck.params, view, &rng, &trace);

    std::size_t n_layers = cfg.n_blocks + 1;
    std::size_t per_layer = 1 + (cfg.use_mixing ? 1 : 0) + (cfg.use_channel_attention ? 1 : 0);
    if (trace.stages.size() != n_layers * per_layer ||
        trace.layer_observed.size() != n_layers || trace.cls_weights.size() != n_layers)
        throw Error("attention trace has an unexpected shape");

    int pred = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits.data[k] > logits.data[pred]) pred = int(k);

    json layers_j = json::array();
    for (std::size_t l = 0; l < n_layers; ++l) {
        json layer{{"layer", l},
                   {"times", trace.layer_times[l]},
                   {"observed", mask_rows_json(trace.layer_observed[l])},
                   {"cls_weights", matrix_json(trace.cls_weights[l])}};
        if (cfg.use_mixing) {
            layer["pivot"] = trace.pivots[l];
            layer["filled"] = bits_rows_json(trace.filled[l], cfg.n_channels);
        }
        json stages = json::array();
        for (std::size_t s = l * per_layer; s < (l + 1) * per_layer; ++s) {
            const layers::StageTrace& st = trace.stages[s];
            json seqs = json::array();
            for (const layers::SeqTrace& sq : st.seqs) {
                json heads = json::array();
                for (const diff::Array& h : sq.head_weights) heads.push_back(matrix_json(h));
                seqs.push_back(
                    json{{"seq", sq.seq}, {"rows", sq.rows}, {"heads", std::move(heads)}});
            }
            stages.push_back(json{{"stage", st.stage}, {"seqs", std::move(seqs)}});
        }
        layer["stages"] = std::move(stages);
        layers_j.push_back(std::move(layer));
    }

    json j{{"id", id},
           {"n_channels", cfg.n_channels},
           {"logits", logits.data},
           {"prediction", pred},
           {"layers", std::move(layers_j)}};
    std::string text = dump2(j);
    if (!out.empty()) {
        ensure_out_dir(out);
        write_text(out + "/attention.json", text);
    }
    std::cout << text;
    return 0;
}

// ---- compare ----------------------------------------------------------------

const std::vector<std::string> kMetricKeys = {"accuracy",        "auroc",
                                              "auprc",           "macro_precision",
                                              "macro_recall",    "macro_f1"};

std::vector<double> load_metric_values(const std::vector<std::string>& files,
                                       const std::string& metric) {
    std::vector<double> out;
    for (const std::string& path : files) {
        json j;
        try {
            j = json::parse(slurp(path, false));
        } catch (const json::parse_error& e) {
            throw ParseError("metrics file " + path + ": " + e.what());
        }
        if (!j.contains(metric) || !j.at(metric).is_number())
            throw DataError("metrics file " + path + " lacks numeric key \"" + metric + "\"");
        out.push_back(j.at(metric).get<double>());
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / double(v.size() - 1));
}

int cmd_compare(const std::vector<std::string>& a_files, const std::vector<std::string>& b_files,
                const std::string& metric, const std::string& out) {
    bool known = false;
    for (const std::string& k : kMetricKeys) known |= k == metric;
    if (!known) throw ConfigError("unknown metric \"" + metric + "\"");
    if (a_files.size() < 2 || b_files.size() < 2)
        throw ConfigError("compare needs at least two runs per side");

    std::vector<double> a = load_metric_values(a_files, metric);
    std::vector<double> b = load_metric_values(b_files, metric);

    metrics::WelchResult w;
    try {
        w = metrics::welch_ttest(a, b);
    } catch (const DegenerateError&) {
        // Zero within-group variance: identical means are indistinguishable,
        // distinct means are trivially separated.
        w.t = 0.0;
        w.df = 0.0;
        w.p = mean_of(a) == mean_of(b) ? 1.0 : 0.0;
    }

    auto side = [&](const std::vector<double>& v, const std::vector<std::string>& files) {
        return json{{"runs", files.size()},
                    {"mean", mean_of(v)},
                    {"std", sample_std(v)},
                    {"formatted", mean_std_string(mean_of(v), sample_std(v))}};
    };
    json j{{"metric", metric},
           {"a", side(a, a_files)},
           {"b", side(b, b_files)},
           {"welch", json{{"t", w.t}, {"df", w.df}, {"p", w.p}}}};
    std::string text = dump2(j);
    if (!out.empty()) {
        ensure_out_dir(out);
        write_text(out + "/comparison.json", text);
    }
    std::cout << text;
    std::cerr << metric << ": a " << mean_std_string(mean_of(a), sample_std(a)) << " vs b "
              << mean_std_string(mean_of(b), sample_std(b)) << ", p = " << w.p << "\n";
    return 0;
}

// ---- option plumbing ----------------------------------------------------------

void apply_ablations(model::ModelConfig& cfg, const std::vector<std::string>& ablate) {
    for (const std::string& a : ablate) {
        if (a == "no-pooling") {
            cfg.use_pooling = false;
        } else if (a == "no-cls") {
            cfg.use_cls = false;
        } else if (a == "no-mixing") {
            cfg.use_mixing = false;
        } else if (a == "no-channel-attn") {
            cfg.use_channel_attention = false;
            cfg.channel_attention_as_mlp = false;
        } else if (a == "channel-attn-mlp") {
            cfg.use_channel_attention = false;
            cfg.channel_attention_as_mlp = true;
        } else {
            throw ConfigError("unknown ablation \"" + a + "\"");
        }
    }
}

} // namespace

json report_json(const metrics::MetricsReport& r) {
    return json{{"binary", r.binary},
                {"auroc", r.auroc},
                {"auprc", r.auprc},
                {"accuracy", r.accuracy},
                {"macro_precision", r.macro_precision},
                {"macro_recall", r.macro_recall},
                {"macro_f1", r.macro_f1},
                {"n_samples", r.n_samples},
                {"confusion", r.confusion},
                {"config_hash", r.config_hash},
                {"seed", r.seed}};
}

std::string mean_std_string(double mean, double std_dev) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f ±%.1f", mean * 100.0, std_dev * 100.0);
    return std::string(buf);
}

int run(int argc, char** argv) {
    CLI::App app{"token-mixing transformer for irregular multivariate time series"};
    app.require_subcommand(1);

    // synth
    auto* syn = app.add_subcommand("synth", "generate a synthetic event dataset");
    std::string syn_config, syn_out = "synth_out";
    long long syn_samples = 0, syn_channels = 0, syn_classes = 0, syn_events = 0;
    double syn_alpha = 0, syn_fmin = 0, syn_fmax = 0, syn_noise = 0, syn_duration = 0;
    std::uint64_t syn_seed = 0;
    syn->add_option("--config", syn_config, "synth spec JSON");
    syn->add_option("--out", syn_out, "output directory");
    syn->add_option("--samples", syn_samples, "number of samples");
    syn->add_option("--channels", syn_channels, "number of channels");
    syn->add_option("--classes", syn_classes, "number of classes");
    syn->add_option("--events", syn_events, "events per channel");
    syn->add_option("--alpha", syn_alpha, "asynchrony level in [0, 1]");
    syn->add_option("--f-min", syn_fmin, "minimum latent frequency");
    syn->add_option("--f-max", syn_fmax, "maximum latent frequency");
    syn->add_option("--noise", syn_noise, "observation noise sd");
    syn->add_option("--duration", syn_duration, "time span of each sample");
    syn->add_option("--seed", syn_seed, "generator seed");

    // train
    auto* trn = app.add_subcommand("train", "train a model and evaluate on the test split");
    std::string trn_config, trn_data, trn_out = "train_out", trn_pooling;
    std::vector<std::string> trn_ablate;
    double trn_mask_ratio = 0, trn_lr = 0, trn_dropout = 0;
    double trn_train_frac = 0, trn_val_frac = 0, trn_test_frac = 0;
    long long trn_rate = 0, trn_blocks = 0, trn_epochs = 0, trn_batch = 0, trn_dmodel = 0,
              trn_heads = 0, trn_subset = 0;
    std::uint64_t trn_seed = 0, trn_split_seed = 0;
    bool trn_class_weighting = false;
    trn->add_option("--config", trn_config, "train run JSON");
    trn->add_option("--data", trn_data, "NDJSON dataset");
    trn->add_option("--out", trn_out, "output directory");
    trn->add_option("--seed", trn_seed, "training seed");
    trn->add_option("--ablate", trn_ablate,
                    "no-pooling | no-cls | no-mixing | no-channel-attn | channel-attn-mlp");
    trn->add_option("--pooling", trn_pooling, "concat | max | avg");
    trn->add_option("--mask-ratio", trn_mask_ratio, "channel mask ratio in [0, 1)");
    trn->add_option("--rate", trn_rate, "down-sampling rate for every block");
    trn->add_option("--blocks", trn_blocks, "number of pooled blocks");
    trn->add_option("--epochs", trn_epochs, "training epochs");
    trn->add_option("--lr", trn_lr, "learning rate");
    trn->add_option("--batch", trn_batch, "batch size");
    trn->add_option("--d-model", trn_dmodel, "embedding width");
    trn->add_option("--heads", trn_heads, "attention heads");
    trn->add_option("--dropout", trn_dropout, "dropout rate");
    trn->add_flag("--class-weighting", trn_class_weighting, "inverse-frequency loss weights");
    trn->add_option("--subset", trn_subset, "split subset id (1..5)");
    trn->add_option("--split-seed", trn_split_seed, "split shuffle seed");
    trn->add_option("--train-frac", trn_train_frac, "train fraction");
    trn->add_option("--val-frac", trn_val_frac, "validation fraction");
    trn->add_option("--test-frac", trn_test_frac, "test fraction");

    // eval
    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string evl_config, evl_checkpoint, evl_data, evl_out;
    double evl_mask_ratio = 0;
    std::uint64_t evl_seed = 0;
    evl->add_option("--config", evl_config, "eval run JSON");
    evl->add_option("--checkpoint", evl_checkpoint, "checkpoint JSON");
    evl->add_option("--data", evl_data, "NDJSON dataset");
    evl->add_option("--out", evl_out, "output directory (optional)");
    evl->add_option("--mask-ratio", evl_mask_ratio, "channel mask ratio in [0, 1)");
    evl->add_option("--seed", evl_seed, "masking seed");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    std::string gc_config, gc_out, gc_pooling;
    std::vector<std::string> gc_ablate;
    long long gc_blocks = 0, gc_rate = 0, gc_dmodel = 0, gc_channels = 0, gc_classes = 0,
              gc_heads = 0, gc_timepoints = 0, gc_max = 0;
    double gc_step = 0, gc_rtol = 0;
    std::uint64_t gc_seed = 0;
    gc->add_option("--config", gc_config, "gradcheck run JSON");
    gc->add_option("--out", gc_out, "output directory (optional)");
    gc->add_option("--seed", gc_seed, "init and probe seed");
    gc->add_option("--blocks", gc_blocks, "number of pooled blocks");
    gc->add_option("--rate", gc_rate, "down-sampling rate");
    gc->add_option("--pooling", gc_pooling, "concat | max | avg");
    gc->add_option("--ablate", gc_ablate, "ablation names, as in train");
    gc->add_option("--d-model", gc_dmodel, "embedding width");
    gc->add_option("--channels", gc_channels, "channels of the toy sample");
    gc->add_option("--classes", gc_classes, "classes of the toy model");
    gc->add_option("--heads", gc_heads, "attention heads");
    gc->add_option("--timepoints", gc_timepoints, "toy sample length");
    gc->add_option("--step", gc_step, "finite-difference step");
    gc->add_option("--rtol", gc_rtol, "relative error tolerance");
    gc->add_option("--max-per-group", gc_max, "coordinates probed per group (0 = all)");

    // dump-attention
    auto* da = app.add_subcommand("dump-attention", "emit attention maps for one sample");
    std::string da_checkpoint, da_data, da_id, da_out;
    da->add_option("--checkpoint", da_checkpoint, "checkpoint JSON")->required();
    da->add_option("--data", da_data, "NDJSON dataset")->required();
    da->add_option("--id", da_id, "sample id")->required();
    da->add_option("--out", da_out, "output directory (optional)");

    // compare
    auto* cmp = app.add_subcommand("compare", "Welch test between two run sets");
    std::vector<std::string> cmp_a, cmp_b;
    std::string cmp_metric = "accuracy", cmp_out;
    cmp->add_option("--a", cmp_a, "metrics JSON files, side A")->required();
    cmp->add_option("--b", cmp_b, "metrics JSON files, side B")->required();
    cmp->add_option("--metric", cmp_metric, "metric key to compare");
    cmp->add_option("--out", cmp_out, "output directory (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(syn)) {
            data::SynthSpec spec;
            if (!syn_config.empty()) spec = synth_from_json(parse_config_file(syn_config));
            if (syn->count("--samples")) spec.n_samples = int(syn_samples);
            if (syn->count("--channels")) spec.n_channels = int(syn_channels);
            if (syn->count("--classes")) spec.classes = int(syn_classes);
            if (syn->count("--events")) spec.events_per_channel = int(syn_events);
            if (syn->count("--alpha")) spec.alpha = syn_alpha;
            if (syn->count("--f-min")) spec.f_min = syn_fmin;
            if (syn->count("--f-max")) spec.f_max = syn_fmax;
            if (syn->count("--noise")) spec.noise_sd = syn_noise;
            if (syn->count("--duration")) spec.duration = syn_duration;
            if (syn->count("--seed")) spec.seed = syn_seed;
            spec = synth_from_json(synth_to_json(spec)); // re-validate combined values
            return cmd_synth(spec, syn_out);
        }
        if (app.got_subcommand(trn)) {
            TrainRun run;
            if (!trn_config.empty()) run = train_run_from_json(parse_config_file(trn_config));
            if (trn->count("--data")) run.data = trn_data;
            if (trn->count("--seed")) run.model.seed = trn_seed;
            if (trn->count("--pooling")) run.model.pooling_kind = trn_pooling;
            if (trn->count("--mask-ratio")) run.mask_ratio = trn_mask_ratio;
            if (trn->count("--rate")) run.model.pool_ratio = {std::size_t(trn_rate)};
            if (trn->count("--blocks")) run.model.n_blocks = std::size_t(trn_blocks);
            if (trn->count("--epochs")) run.model.epochs = std::size_t(trn_epochs);
            if (trn->count("--lr")) run.model.lr = trn_lr;
            if (trn->count("--batch")) run.model.batch_size = std::size_t(trn_batch);
            if (trn->count("--d-model")) run.model.d_model = std::size_t(trn_dmodel);
            if (trn->count("--heads")) run.model.heads = std::size_t(trn_heads);
            if (trn->count("--dropout")) run.model.dropout = trn_dropout;
            if (trn->count("--class-weighting")) run.model.class_weighting = trn_class_weighting;
            if (trn->count("--subset")) run.split.subset_id = int(trn_subset);
            if (trn->count("--split-seed")) run.split.seed = trn_split_seed;
            if (trn->count("--train-frac")) run.split.train_frac = trn_train_frac;
            if (trn->count("--val-frac")) run.split.val_frac = trn_val_frac;
            if (trn->count("--test-frac")) run.split.test_frac = trn_test_frac;
            apply_ablations(run.model, trn_ablate);
            run = train_run_from_json(train_run_to_json(run));
            if (run.data.empty())
                throw ConfigError("train needs --data or a config with a data path");
            return cmd_train(run, trn_out);
        }
        if (app.got_subcommand(evl)) {
            EvalRun run;
            if (!evl_config.empty()) run = eval_run_from_json(parse_config_file(evl_config));
            if (evl->count("--checkpoint")) run.checkpoint = evl_checkpoint;
            if (evl->count("--data")) run.data = evl_data;
            if (evl->count("--mask-ratio")) run.mask_ratio = evl_mask_ratio;
            if (evl->count("--seed")) run.seed = evl_seed;
            run = eval_run_from_json(eval_run_to_json(run));
            if (run.checkpoint.empty() || run.data.empty())
                throw ConfigError("eval needs --checkpoint and --data");
            return cmd_eval(run, evl_out);
        }
        if (app.got_subcommand(gc)) {
            GradcheckRun run;
            if (!gc_config.empty()) run = gradcheck_run_from_json(parse_config_file(gc_config));
            else {
                run.model.d_model = 8;
                run.model.n_blocks = 1;
                run.model.pool_ratio = {2};
            }
            if (gc->count("--seed")) run.model.seed = gc_seed;
            if (gc->count("--blocks")) run.model.n_blocks = std::size_t(gc_blocks);
            if (gc->count("--rate")) run.model.pool_ratio = {std::size_t(gc_rate)};
            if (gc->count("--pooling")) run.model.pooling_kind = gc_pooling;
            if (gc->count("--d-model")) run.model.d_model = std::size_t(gc_dmodel);
            if (gc->count("--channels")) run.model.n_channels = std::size_t(gc_channels);
            if (gc->count("--classes")) run.model.n_classes = std::size_t(gc_classes);
            if (gc->count("--heads")) run.model.heads = std::size_t(gc_heads);
            if (gc->count("--timepoints")) run.timepoints = std::size_t(gc_timepoints);
            if (gc->count("--step")) run.step = gc_step;
            if (gc->count("--rtol")) run.rtol = gc_rtol;
            if (gc->count("--max-per-group")) run.max_per_group = std::size_t(gc_max);
            apply_ablations(run.model, gc_ablate);
            return cmd_gradcheck(run, gc_out);
        }
        if (app.got_subcommand(da))
            return cmd_dump_attention(da_checkpoint, da_data, da_id, da_out);
        if (app.got_subcommand(cmp)) return cmd_compare(cmp_a, cmp_b, cmp_metric, cmp_out);
        throw ConfigError("no command given");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("mtm");
    for (const std::string& a : args) storage.push_back(a);
    std::vector<char*> argv;
    for (std::string& s : storage) argv.push_back(s.data());
    return run(int(argv.size()), argv.data());
}

} // namespace mtm::cli
