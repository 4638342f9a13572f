#include "mia/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "mia/checkpoint.hpp"
#include "mia/error.hpp"
#include "mia/hash.hpp"
#include "mia/svg_plot.hpp"

namespace mia {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Role tags for deriving independent seed streams from the master seed.
constexpr std::uint64_t kTagSplit = 0x73706c6974ULL;
constexpr std::uint64_t kTagTarget = 0x746172676574ULL;
constexpr std::uint64_t kTagCalib = 0x63616c6962ULL;
constexpr std::uint64_t kTagSigma = 0x7369676d61ULL;
constexpr std::uint64_t kTagAudit = 0x6175646974ULL;

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

void apply_threads(const RunConfig& cfg) {
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#else
    (void)cfg;
#endif
}

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
            throw DataError(Errc::io_failure, "cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

struct TrainLog {
    std::ostream* out;
    const char* label;
    int total;
};

void train_progress(int step, double loss, void* ctx) {
    auto* tl = static_cast<TrainLog*>(ctx);
    int every = std::max(1, tl->total / 8);
    if (step % every == 0 || step == tl->total) {
        (*tl->out) << "  " << tl->label << " step " << step << "/" << tl->total
                   << "  loss " << loss << "\n";
    }
}

// ---- manifest ------------------------------------------------------------

ordered_json load_manifest(const OutputPaths& paths) {
    std::ifstream in(paths.manifest(), std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_resource,
                        "no manifest at " + paths.manifest().string() +
                            " (run `train` first)");
    }
    try {
        ordered_json j;
        in >> j;
        return j;
    } catch (const json::parse_error& e) {
        throw DataError(Errc::report_malformed,
                        std::string("manifest is not valid JSON: ") + e.what());
    }
}

void store_manifest(const OutputPaths& paths, const ordered_json& m) {
    write_text_atomic(paths.manifest(), m.dump(2) + "\n");
}

void manifest_record_file(ordered_json& m, const OutputPaths& paths,
                          const std::filesystem::path& file) {
    m["files"][file.filename().string()] = hash_hex(hash_file(file));
    (void)paths;
}

// Checks a previously recorded artifact: present and bit-identical.
bool manifest_file_ok(const ordered_json& m, const std::filesystem::path& file) {
    const std::string key = file.filename().string();
    if (!m.contains("files") || !m.at("files").contains(key)) return false;
    std::error_code ec;
    if (!std::filesystem::exists(file, ec) || ec) return false;
    return m.at("files").at(key).get<std::string>() == hash_hex(hash_file(file));
}

void require_manifest_file(const ordered_json& m, const std::filesystem::path& file,
                           const std::string& hint) {
    if (!manifest_file_ok(m, file)) {
        throw DataError(Errc::missing_resource,
                        file.string() + " is missing or does not match the "
                        "manifest (" + hint + ")");
    }
}

// ---- derived data ----------------------------------------------------------

struct DerivedData {
    Corpus corpus;
    std::vector<TokenSequence> windows;
};

DerivedData derive_windows(const RunConfig& cfg) {
    DerivedData d;
    d.corpus = load_corpus(cfg.corpus_path);
    auto ids = tokenize(d.corpus);
    d.windows = make_windows(ids, cfg.window_len, cfg.effective_stride());
    return d;
}

SplitPlanProvenance plan_provenance(const RunConfig& cfg, const Corpus& corpus) {
    SplitPlanProvenance prov;
    prov.corpus_hash = corpus.content_hash;
    prov.window_len = cfg.window_len;
    prov.stride = cfg.effective_stride();
    prov.member_fraction = cfg.member_fraction;
    prov.shadow_k = cfg.shadow_k;
    return prov;
}

int shadow_steps(const RunConfig& cfg, std::size_t partition_size,
                 std::size_t member_count) {
    if (cfg.shadow_train_steps >= 0) return cfg.shadow_train_steps;
    // Exposure parity: each shadow sees its partition as often per window as
    // the target sees the full member set.
    double scaled = static_cast<double>(cfg.lm.train_steps) *
                    static_cast<double>(partition_size) /
                    static_cast<double>(member_count);
    return std::max(1, static_cast<int>(std::llround(scaled)));
}

std::uint64_t ids_hash(std::vector<std::uint64_t> ids) {
    std::sort(ids.begin(), ids.end());
    return fnv1a64(ids.data(), ids.size() * sizeof(std::uint64_t));
}

std::vector<std::uint64_t> sample_ids(const std::vector<AuditSample>& v) {
    std::vector<std::uint64_t> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.id);
    return out;
}

// Mann-Whitney pairwise counts: provenance for the trapezoidal AUC.
struct PairCounts {
    std::uint64_t concordant = 0;  // member score < non-member score
    std::uint64_t tied = 0;
    std::uint64_t total = 0;
    double statistic() const {
        return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
               static_cast<double>(total);
    }
};

PairCounts mann_whitney_counts(std::span<const ScoreRecord> records) {
    std::vector<double> m, n;
    for (const auto& r : records) {
        (r.is_member ? m : n).push_back(r.calibrated_score);
    }
    std::sort(n.begin(), n.end());
    PairCounts pc;
    pc.total = static_cast<std::uint64_t>(m.size()) * n.size();
    for (double s : m) {
        auto lo = std::lower_bound(n.begin(), n.end(), s);
        auto hi = std::upper_bound(n.begin(), n.end(), s);
        pc.concordant += static_cast<std::uint64_t>(n.end() - hi);
        pc.tied += static_cast<std::uint64_t>(hi - lo);
    }
    return pc;
}

}  // namespace

std::filesystem::path OutputPaths::shadow_checkpoint(std::size_t i) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "shadow_%02zu.ckpt", i);
    return out_dir / buf;
}

std::filesystem::path OutputPaths::scores_csv(StrategyKind k) const {
    return out_dir / ("scores_" + std::string(strategy_name(k)) + ".csv");
}

std::filesystem::path OutputPaths::roc_csv_path(StrategyKind k) const {
    return out_dir / ("roc_" + std::string(strategy_name(k)) + ".csv");
}

std::filesystem::path OutputPaths::eps_csv_path(StrategyKind k) const {
    return out_dir / ("eps_" + std::string(strategy_name(k)) + ".csv");
}

EvalSplit make_eval_split(const SplitPlan& plan, std::uint64_t master_seed) {
    auto build = [&](const std::vector<TokenSequence>& samples,
                     const std::vector<std::size_t>& window_indices,
                     std::uint64_t tag, std::vector<AuditSample>& cal,
                     std::vector<AuditSample>& eval_set) {
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(master_seed, kTagCalib ^ tag));
        rng.shuffle(order);
        std::size_t n_cal = samples.size() / 2;
        for (std::size_t i = 0; i < order.size(); ++i) {
            AuditSample s;
            s.id = window_indices[order[i]];
            s.seq = samples[order[i]];
            (i < n_cal ? cal : eval_set).push_back(std::move(s));
        }
    };
    EvalSplit split;
    build(plan.member_samples, plan.member_window_indices, 0x6d, split.cal_members,
          split.eval_members);
    build(plan.nonmember_samples, plan.nonmember_window_indices, 0x6e,
          split.cal_nonmembers, split.eval_nonmembers);
    return split;
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    apply_threads(cfg);
    OutputPaths paths{cfg.out_dir};
    std::filesystem::create_directories(paths.out_dir);

    Stopwatch sw;
    DerivedData d = derive_windows(cfg);
    log << "corpus " << cfg.corpus_path << ": " << d.corpus.raw_bytes.size()
        << " bytes, " << d.windows.size() << " windows of " << cfg.window_len
        << "\n";

    SplitPlan plan = split(d.windows, cfg.member_fraction, cfg.shadow_k,
                           mix_seed(cfg.master_seed, kTagSplit));
    log << "split: " << plan.member_samples.size() << " members / "
        << plan.nonmember_samples.size() << " non-members, "
        << plan.shadow_partitions.size() << " shadow partitions\n";

    LmConfig lm_cfg = cfg.lm;
    lm_cfg.seed = mix_seed(cfg.master_seed, kTagTarget);
    TrainLog tl{&log, "target", lm_cfg.train_steps};
    LmModel target =
        train(lm_cfg, plan.member_samples, lm_cfg.seed, train_progress, &tl);

    save_checkpoint(target, paths.target_checkpoint());
    save_split_plan(plan, plan_provenance(cfg, d.corpus), paths.split_plan());

    ordered_json manifest;
    manifest["config_hash"] = hash_hex(run_config_hash(cfg));
    manifest["config"] = json::parse(run_config_canonical_json(cfg));
    manifest["corpus_hash"] = hash_hex(d.corpus.content_hash);
    manifest["files"] = ordered_json::object();
    manifest_record_file(manifest, paths, paths.target_checkpoint());
    manifest_record_file(manifest, paths, paths.split_plan());
    store_manifest(paths, manifest);

    log << "wrote " << paths.target_checkpoint().string() << ", "
        << paths.split_plan().string() << ", " << paths.manifest().string()
        << " (" << sw.seconds() << "s)\n";
}

namespace {

struct LoadedRun {
    OutputPaths paths;
    DerivedData data;
    SplitPlan plan;
    ordered_json manifest;
};

LoadedRun load_run(const RunConfig& cfg) {
    LoadedRun run{OutputPaths{cfg.out_dir}, {}, {}, {}};
    run.manifest = load_manifest(run.paths);
    run.data = derive_windows(cfg);
    if (run.manifest.at("corpus_hash").get<std::string>() !=
        hash_hex(run.data.corpus.content_hash)) {
        throw DataError(Errc::config_bad_value,
                        "corpus bytes changed since `train` ran");
    }
    require_manifest_file(run.manifest, run.paths.split_plan(), "run `train`");
    run.plan = load_split_plan(run.paths.split_plan(), run.data.windows,
                               plan_provenance(cfg, run.data.corpus));
    return run;
}

}  // namespace

void cmd_shadows(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    apply_threads(cfg);
    LoadedRun run = load_run(cfg);

    const std::size_t members = run.plan.member_samples.size();
    for (std::size_t i = 0; i < run.plan.shadow_partitions.size(); ++i) {
        auto path = run.paths.shadow_checkpoint(i);
        if (manifest_file_ok(run.manifest, path)) {
            log << "shadow " << i << ": already trained, skipping\n";
            continue;
        }
        const auto& part = run.plan.shadow_partitions[i];
        std::vector<TokenSequence> subset;
        subset.reserve(part.size());
        for (std::size_t idx : part) subset.push_back(run.plan.member_samples[idx]);

        LmConfig shadow_cfg = cfg.lm;
        shadow_cfg.train_steps = shadow_steps(cfg, part.size(), members);
        shadow_cfg.seed = cfg.master_seed ^ static_cast<std::uint64_t>(i);
        std::string label = "shadow " + std::to_string(i);
        TrainLog tl{&log, label.c_str(), shadow_cfg.train_steps};
        LmModel shadow =
            train(shadow_cfg, subset, shadow_cfg.seed, train_progress, &tl);
        save_checkpoint(shadow, path);
        manifest_record_file(run.manifest, run.paths, path);
        store_manifest(run.paths, run.manifest);
        log << "wrote " << path.string() << " (" << part.size()
            << " windows, " << shadow_cfg.train_steps << " steps)\n";
    }
}

void cmd_sigma_search(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (!cfg.sigma_auto) {
        throw UsageError(Errc::config_bad_value,
                         "sigma is fixed in the config; set \"sigma\": \"auto\" "
                         "to search");
    }
    apply_threads(cfg);
    LoadedRun run = load_run(cfg);
    require_manifest_file(run.manifest, run.paths.target_checkpoint(),
                          "run `train`");
    LmModel target = load_checkpoint(run.paths.target_checkpoint());

    EvalSplit split = make_eval_split(run.plan, cfg.master_seed);
    auto cap = [&](std::vector<AuditSample>& v) {
        if (cfg.sigma_probe_cap > 0 && v.size() > cfg.sigma_probe_cap) {
            v.resize(cfg.sigma_probe_cap);
        }
    };
    cap(split.cal_members);
    cap(split.cal_nonmembers);

    std::vector<std::uint64_t> reserved = sample_ids(split.eval_members);
    auto nm = sample_ids(split.eval_nonmembers);
    reserved.insert(reserved.end(), nm.begin(), nm.end());

    const std::uint64_t probe_seed = mix_seed(cfg.master_seed, kTagSigma);
    log << "sigma search on " << split.cal_members.size() << "+"
        << split.cal_nonmembers.size() << " calibration samples, bracket ["
        << cfg.sigma_lo << ", " << cfg.sigma_hi << "]\n";
    Stopwatch sw;
    SigmaSearchResult res = sigma_search(
        target, split.cal_members, split.cal_nonmembers, cfg.sigma_lo,
        cfg.sigma_hi, cfg.neighbor_k, cfg.sigma_tol, probe_seed, reserved);
    log << "sigma* = " << res.sigma_star << " after " << res.probe_log.size()
        << " probes (" << sw.seconds() << "s)\n";

    ordered_json out;
    out["sigma_star"] = res.sigma_star;
    out["bracket"] = {res.bracket_lo, res.bracket_hi};
    out["neighbor_k"] = cfg.neighbor_k;
    out["seed"] = probe_seed;
    out["probe_cap"] = cfg.sigma_probe_cap;
    out["calibration"] = {
        {"n_members", split.cal_members.size()},
        {"n_nonmembers", split.cal_nonmembers.size()},
        {"member_ids_hash", hash_hex(ids_hash(sample_ids(split.cal_members)))},
        {"nonmember_ids_hash",
         hash_hex(ids_hash(sample_ids(split.cal_nonmembers)))}};
    auto& probes = out["probes"] = ordered_json::array();
    for (const auto& p : res.probe_log) {
        probes.push_back({{"sigma", p.sigma}, {"auc", p.auc}});
    }
    write_text_atomic(run.paths.sigma_result(), out.dump(2) + "\n");

    std::string csv = "sigma,auc\n";
    for (const auto& p : res.probe_log) {
        csv += fmt_g17(p.sigma) + "," + fmt_g17(p.auc) + "\n";
    }
    write_text_atomic(run.paths.sigma_probes_csv(), csv);

    PlotSpec plot;
    plot.title = "noisy-neighbor AUC vs sigma";
    plot.x_label = "sigma (log)";
    plot.y_label = "AUC on calibration split";
    plot.log_x = true;
    PlotSeries series;
    series.label = "probe AUC";
    series.color = default_plot_color(0);
    series.markers = true;
    std::vector<SigmaProbe> sorted = res.probe_log;
    std::sort(sorted.begin(), sorted.end(),
              [](const SigmaProbe& a, const SigmaProbe& b) { return a.sigma < b.sigma; });
    for (const auto& p : sorted) series.points.push_back({p.sigma, p.auc});
    plot.series.push_back(std::move(series));
    plot.data_comment = csv;
    write_svg_plot(plot, run.paths.sigma_plot());

    manifest_record_file(run.manifest, run.paths, run.paths.sigma_result());
    manifest_record_file(run.manifest, run.paths, run.paths.sigma_probes_csv());
    manifest_record_file(run.manifest, run.paths, run.paths.sigma_plot());
    store_manifest(run.paths, run.manifest);
}

void cmd_audit(const RunConfig& cfg, const std::vector<StrategyKind>& strategies,
               std::ostream& log) {
    cfg.validate();
    if (strategies.empty()) {
        throw UsageError(Errc::bad_strategy, "no strategies requested");
    }
    apply_threads(cfg);
    LoadedRun run = load_run(cfg);
    require_manifest_file(run.manifest, run.paths.target_checkpoint(),
                          "run `train`");
    LmModel target = load_checkpoint(run.paths.target_checkpoint());

    std::map<std::string, double> timings;
    Stopwatch total_sw;

    const bool want_shadow =
        std::find(strategies.begin(), strategies.end(), StrategyKind::shadow) !=
        strategies.end();
    const bool want_noisy =
        std::find(strategies.begin(), strategies.end(), StrategyKind::noisy) !=
        strategies.end();

    std::vector<LmModel> shadows;
    if (want_shadow) {
        for (std::size_t i = 0; i < cfg.shadow_k; ++i) {
            auto path = run.paths.shadow_checkpoint(i);
            require_manifest_file(run.manifest, path, "run `shadows`");
            shadows.push_back(load_checkpoint(path));
        }
    }

    double sigma_value = cfg.sigma;
    std::string sigma_source = "config";
    if (want_noisy && cfg.sigma_auto) {
        if (!manifest_file_ok(run.manifest, run.paths.sigma_result())) {
            throw DataError(Errc::missing_resource,
                            "sigma is \"auto\" but no search output exists; "
                            "run `sigma-search` first");
        }
        std::ifstream in(run.paths.sigma_result(), std::ios::binary);
        json sigma_json;
        in >> sigma_json;
        sigma_value = sigma_json.at("sigma_star").get<double>();
        sigma_source = run.paths.sigma_result().filename().string();
    }

    EvalSplit split = make_eval_split(run.plan, cfg.master_seed);
    const auto& eval_m = split.eval_members;
    const auto& eval_n = split.eval_nonmembers;
    log << "evaluating " << eval_m.size() << " members + " << eval_n.size()
        << " non-members\n";

    const std::uint64_t audit_seed = mix_seed(cfg.master_seed, kTagAudit);
    const std::uint64_t eval_hash =
        ids_hash([&] {
            auto ids = sample_ids(eval_m);
            auto n = sample_ids(eval_n);
            ids.insert(ids.end(), n.begin(), n.end());
            return ids;
        }());

    ordered_json report;
    report["config_hash"] = hash_hex(run_config_hash(cfg));
    report["corpus_hash"] = hash_hex(run.data.corpus.content_hash);
    report["master_seed"] = cfg.master_seed;
    report["split_plan"] = run.paths.split_plan().filename().string();
    report["checkpoints"]["target"] = {
        {"path", run.paths.target_checkpoint().filename().string()},
        {"hash", hash_hex(hash_file(run.paths.target_checkpoint()))}};
    if (want_shadow) {
        auto& arr = report["checkpoints"]["shadows"] = ordered_json::array();
        for (std::size_t i = 0; i < shadows.size(); ++i) {
            arr.push_back(
                {{"path", run.paths.shadow_checkpoint(i).filename().string()},
                 {"hash", hash_hex(hash_file(run.paths.shadow_checkpoint(i)))}});
        }
    }
    report["evaluation"] = {{"n_members", eval_m.size()},
                            {"n_nonmembers", eval_n.size()},
                            {"sample_ids_hash", hash_hex(eval_hash)}};
    if (want_noisy) {
        report["sigma"] = {{"value", sigma_value},
                           {"mode", cfg.sigma_auto ? "auto" : "fixed"},
                           {"source", sigma_source}};
    }

    // Canonical strategy order keeps reruns byte-identical regardless of the
    // order flags were given in.
    std::vector<StrategyKind> ordered;
    for (StrategyKind k :
         {StrategyKind::loss, StrategyKind::shadow, StrategyKind::noisy}) {
        if (std::find(strategies.begin(), strategies.end(), k) != strategies.end()) {
            ordered.push_back(k);
        }
    }

    struct StrategyPlotData {
        StrategyKind kind;
        RocCurve curve;
        EpsCurve eps;
    };
    std::vector<StrategyPlotData> plot_data;

    auto& strat_json = report["strategies"] = ordered_json::object();
    for (StrategyKind kind : ordered) {
        Stopwatch sw;
        StrategySpec spec;
        spec.kind = kind;
        spec.seed = audit_seed;
        if (kind == StrategyKind::noisy) {
            spec.sigma = sigma_value;
            spec.neighbor_count = cfg.neighbor_k;
        }
        if (kind == StrategyKind::shadow) {
            spec.shadow_count = static_cast<int>(shadows.size());
        }
        auto records = audit(target, spec, eval_m, eval_n, shadows);

        // All strategies must score the exact same sample set.
        auto ids = ids_hash([&] {
            std::vector<std::uint64_t> v;
            for (const auto& r : records) v.push_back(r.sample_id);
            return v;
        }());
        if (ids != eval_hash) {
            throw NumericError(Errc::bad_strategy,
                               "strategies scored different sample sets");
        }

        save_score_records_csv(records, run.paths.scores_csv(kind));
        RocCurve curve = roc(records);
        double area = auc(curve);
        PairCounts pairs = mann_whitney_counts(records);
        save_roc_csv(curve, run.paths.roc_csv_path(kind));
        EpsCurve eps = empirical_epsilon(curve);
        save_eps_csv(eps, run.paths.eps_csv_path(kind));

        ordered_json sj;
        sj["scores_csv"] = run.paths.scores_csv(kind).filename().string();
        sj["roc_csv"] = run.paths.roc_csv_path(kind).filename().string();
        sj["eps_csv"] = run.paths.eps_csv_path(kind).filename().string();
        sj["seed"] = spec.seed;
        if (kind == StrategyKind::noisy) {
            sj["sigma"] = spec.sigma;
            sj["neighbor_k"] = spec.neighbor_count;
        }
        sj["auc"] = area;
        sj["pair_counts"] = {{"concordant", pairs.concordant},
                             {"tied", pairs.tied},
                             {"total", pairs.total},
                             {"statistic", pairs.statistic()}};
        for (double target_fpr : {1e-3, 1e-2, 1e-1}) {
            TprAtFpr t = tpr_at_fpr(curve, target_fpr);
            char key[16];
            std::snprintf(key, sizeof(key), "%g", target_fpr);
            sj["tpr_at_fpr"][key] = {
                {"tpr", t.tpr},
                {"fpr_achieved", t.fpr_achieved},
                {"ci_lo", t.tpr_interval.lo},
                {"ci_hi", t.tpr_interval.hi},
                {"confidence", t.tpr_interval.confidence},
                {"tp", t.tpr_interval.k},
                {"n", t.tpr_interval.n}};
        }
        double max_eps = 0.0, max_eps_fpr = 0.0;
        for (const auto& p : eps.points) {
            if (p.eps_lower > max_eps) {
                max_eps = p.eps_lower;
                max_eps_fpr = p.fpr;
            }
        }
        sj["eps_max"] = {{"eps", max_eps}, {"fpr", max_eps_fpr}};
        sj["eps_skipped_points"] = eps.skipped_points;
        strat_json[strategy_name(kind)] = std::move(sj);

        plot_data.push_back({kind, std::move(curve), std::move(eps)});
        timings[std::string("audit_") + strategy_name(kind)] = sw.seconds();
        log << strategy_name(kind) << ": AUC " << area << " ("
            << timings[std::string("audit_") + strategy_name(kind)] << "s)\n";
    }

    // Fig. 2a analog: full ROC on linear axes.
    {
        PlotSpec plot;
        plot.title = "membership inference ROC";
        plot.x_label = "FPR";
        plot.y_label = "TPR";
        PlotSeries diag;
        diag.label = "chance";
        diag.color = "#999999";
        diag.points = {{0.0, 0.0}, {1.0, 1.0}};
        plot.series.push_back(diag);
        std::size_t ci = 0;
        for (const auto& pd : plot_data) {
            PlotSeries s;
            s.label = strategy_name(pd.kind);
            s.color = default_plot_color(ci++);
            for (const auto& p : pd.curve.points) s.points.push_back({p.fpr, p.tpr});
            plot.series.push_back(std::move(s));
        }
        write_svg_plot(plot, run.paths.roc_plot());
    }

    // Fig. 2b analog: log-log low-FPR view with Clopper-Pearson bands.
    {
        PlotSpec plot;
        plot.title = "attack power at low FPR";
        plot.x_label = "FPR (log)";
        plot.y_label = "TPR (log)";
        plot.log_x = true;
        plot.log_y = true;
        std::size_t ci = 0;
        for (const auto& pd : plot_data) {
            std::string color = default_plot_color(ci++);
            PlotSeries s;
            s.label = strategy_name(pd.kind);
            s.color = color;
            PlotBand band;
            band.label = std::string(strategy_name(pd.kind)) + " 95% CI";
            band.color = color;
            for (const auto& p : pd.curve.points) {
                if (p.fpr <= 0.0 || p.tpr <= 0.0) continue;
                s.points.push_back({p.fpr, p.tpr});
                BinomialInterval iv = clopper_pearson(p.tp, pd.curve.n_members);
                band.points.push_back({p.fpr, std::max(iv.lo, 1e-6), iv.hi});
            }
            plot.series.push_back(std::move(s));
            plot.bands.push_back(std::move(band));
        }
        write_svg_plot(plot, run.paths.lowfpr_plot());
    }

    // Fig. 3 analog: empirical epsilon lower bound vs FPR.
    {
        PlotSpec plot;
        plot.title = "empirical epsilon lower bound";
        plot.x_label = "FPR (log)";
        plot.y_label = "epsilon";
        plot.log_x = true;
        std::size_t ci = 0;
        for (const auto& pd : plot_data) {
            PlotSeries s;
            s.label = strategy_name(pd.kind);
            s.color = default_plot_color(ci++);
            for (const auto& p : pd.eps.points) s.points.push_back({p.fpr, p.eps_lower});
            plot.series.push_back(std::move(s));
        }
        write_svg_plot(plot, run.paths.eps_plot());
    }

    timings["total"] = total_sw.seconds();
    auto& tj = report["timings_sec"] = ordered_json::object();
    for (const auto& [k, v] : timings) tj[k] = v;

    write_text_atomic(run.paths.report(), report.dump(2) + "\n");

    for (StrategyKind kind : ordered) {
        manifest_record_file(run.manifest, run.paths, run.paths.scores_csv(kind));
        manifest_record_file(run.manifest, run.paths, run.paths.roc_csv_path(kind));
        manifest_record_file(run.manifest, run.paths, run.paths.eps_csv_path(kind));
    }
    manifest_record_file(run.manifest, run.paths, run.paths.report());
    store_manifest(run.paths, run.manifest);
    log << "report: " << run.paths.report().string() << "\n";
}

void cmd_report(const std::filesystem::path& report_path, std::ostream& out) {
    std::ifstream in(report_path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_file,
                        "cannot open report: " + report_path.string());
    }
    json report;
    try {
        in >> report;
    } catch (const json::parse_error& e) {
        throw DataError(Errc::report_malformed,
                        std::string("malformed report JSON: ") + e.what());
    }

    try {
        // Referenced artifacts must still match the manifest's view of them.
        const auto dir = report_path.parent_path();
        OutputPaths paths{dir};
        ordered_json manifest = load_manifest(paths);
        for (const auto& [name, sj] : report.at("strategies").items()) {
            auto csv = dir / sj.at("scores_csv").get<std::string>();
            require_manifest_file(manifest, csv, "re-run `audit`");
        }

        out << "audit report: " << report_path.string() << "\n";
        out << "  config " << report.at("config_hash").get<std::string>()
            << "  corpus " << report.at("corpus_hash").get<std::string>()
            << "  seed " << report.at("master_seed") << "\n";
        if (report.contains("sigma")) {
            out << "  sigma " << report.at("sigma").at("value").get<double>()
                << " (" << report.at("sigma").at("mode").get<std::string>()
                << ", " << report.at("sigma").at("source").get<std::string>()
                << ")\n";
        }
        const auto& ev = report.at("evaluation");
        out << "  evaluation set: " << ev.at("n_members") << " members, "
            << ev.at("n_nonmembers") << " non-members\n\n";

        char line[256];
        std::snprintf(line, sizeof(line), "%-8s %-8s %-24s %-24s %-24s %s\n",
                      "strategy", "AUC", "TPR@1e-3 [95% CI]",
                      "TPR@1e-2 [95% CI]", "TPR@1e-1 [95% CI]", "max eps (fpr)");
        out << line;
        for (const auto& [name, sj] : report.at("strategies").items()) {
            std::string cells[3];
            int idx = 0;
            for (const char* key : {"0.001", "0.01", "0.1"}) {
                const auto& t = sj.at("tpr_at_fpr").at(key);
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.4f [%.4f, %.4f]",
                              t.at("tpr").get<double>(),
                              t.at("ci_lo").get<double>(),
                              t.at("ci_hi").get<double>());
                cells[idx++] = buf;
            }
            char eps_buf[48];
            std::snprintf(eps_buf, sizeof(eps_buf), "%.3f (%.2g)",
                          sj.at("eps_max").at("eps").get<double>(),
                          sj.at("eps_max").at("fpr").get<double>());
            std::snprintf(line, sizeof(line), "%-8s %-8.4f %-24s %-24s %-24s %s\n",
                          name.c_str(), sj.at("auc").get<double>(),
                          cells[0].c_str(), cells[1].c_str(), cells[2].c_str(),
                          eps_buf);
            out << line;
        }
    } catch (const json::exception& e) {
        throw DataError(Errc::report_malformed,
                        std::string("report is missing required fields: ") +
                            e.what());
    }
}

}  // namespace mia
