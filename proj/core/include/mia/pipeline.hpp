#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mia/attack.hpp"
#include "mia/config.hpp"
#include "mia/corpus.hpp"
#include "mia/metrics.hpp"

namespace mia {

// File layout inside a run's output directory.
struct OutputPaths {
    std::filesystem::path out_dir;

    std::filesystem::path target_checkpoint() const { return out_dir / "target.ckpt"; }
    std::filesystem::path split_plan() const { return out_dir / "split_plan.json"; }
    std::filesystem::path manifest() const { return out_dir / "manifest.json"; }
    std::filesystem::path shadow_checkpoint(std::size_t i) const;
    std::filesystem::path sigma_result() const { return out_dir / "sigma_search.json"; }
    std::filesystem::path sigma_probes_csv() const { return out_dir / "sigma_probes.csv"; }
    std::filesystem::path sigma_plot() const { return out_dir / "sigma_auc.svg"; }
    std::filesystem::path scores_csv(StrategyKind k) const;
    std::filesystem::path roc_csv_path(StrategyKind k) const;
    std::filesystem::path eps_csv_path(StrategyKind k) const;
    std::filesystem::path report() const { return out_dir / "report.json"; }
    std::filesystem::path roc_plot() const { return out_dir / "roc.svg"; }
    std::filesystem::path lowfpr_plot() const { return out_dir / "roc_lowfpr.svg"; }
    std::filesystem::path eps_plot() const { return out_dir / "eps.svg"; }
};

// Calibration/evaluation halves of the member and non-member pools. Sigma is
// tuned on the calibration halves only; every reported number comes from the
// evaluation halves.
struct EvalSplit {
    std::vector<AuditSample> cal_members, cal_nonmembers;
    std::vector<AuditSample> eval_members, eval_nonmembers;
};

EvalSplit make_eval_split(const SplitPlan& plan, std::uint64_t master_seed);

// Subcommand bodies. Progress goes to `log`; failures are thrown.
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_shadows(const RunConfig& cfg, std::ostream& log);
void cmd_sigma_search(const RunConfig& cfg, std::ostream& log);
void cmd_audit(const RunConfig& cfg, const std::vector<StrategyKind>& strategies,
               std::ostream& log);
void cmd_report(const std::filesystem::path& report_path, std::ostream& out);

}  // namespace mia
