#include "parkvision/experiment.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parkvision/errors.hpp"

namespace pv {

namespace {

void require_lots(const DatasetIndex& index, const std::vector<std::string>& lots, const char* role) {
  if (lots.empty()) throw ConfigError(fmt::format("experiment plan has no {} lots", role));
  for (const auto& lot : lots) {
    if (!index.has_lot(lot)) throw ConfigError(fmt::format("{} lot '{}' is not present in the dataset", role, lot));
  }
}

}  // namespace

std::vector<EvalReport> evaluate_model(const Model& model, const DatasetIndex& held_out,
                                       const std::vector<std::string>& train_lots,
                                       const std::vector<std::string>& test_lots) {
  require_lots(held_out, test_lots, "test");
  std::vector<EvalReport> reports;
  constexpr std::size_t kChunk = 64;
  for (const auto& lot : test_lots) {
    const std::vector<std::string> one{lot};
    const DatasetIndex subset = held_out.filter_lots(one);
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::size_t> ids;
    for (std::size_t start = 0; start < subset.size(); start += kChunk) {
      ids.clear();
      for (std::size_t i = start; i < std::min(subset.size(), start + kChunk); ++i) ids.push_back(i);
      const Batch batch = load_batch(subset, ids, model.input_format());
      const auto probs = occupied_probabilities(model, batch.inputs);
      scores.insert(scores.end(), probs.begin(), probs.end());
      labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    }
    reports.push_back(make_report(train_lots, one, scores, labels));
    spdlog::info("eval {} -> {}: auc {:.6f} fpr {:.6f} fnr {:.6f} ({} samples)", lot_set_name(train_lots), lot,
                 reports.back().auc, reports.back().fpr_at_half, reports.back().fnr_at_half, scores.size());
  }
  return reports;
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const DatasetIndex& index) {
  require_lots(index, plan.train_lots, "train");
  require_lots(index, plan.test_lots, "test");
  const Split parts = split(index, plan.split_ratio, plan.split_seed);
  const DatasetIndex train = parts.train.filter_lots(plan.train_lots);

  Model model = build(plan.spec);
  ExperimentResult result;
  result.training = fine_tune(model, train, plan.hp);
  result.reports = evaluate_model(model, parts.test, plan.train_lots, plan.test_lots);
  return result;
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const std::filesystem::path& data_root) {
  return run_experiment(plan, scan_tree(data_root));
}

std::vector<ExperimentPlan> cross_lot_plans(const std::vector<std::string>& lots, const ExperimentPlan& base) {
  std::vector<ExperimentPlan> plans;
  for (const auto& lot : lots) {
    ExperimentPlan p = base;
    p.train_lots = {lot};
    p.test_lots = lots;
    plans.push_back(std::move(p));
  }
  if (lots.size() > 1) {
    ExperimentPlan p = base;
    p.train_lots = lots;
    p.test_lots = lots;
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace pv
