#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parkvision/dataset.hpp"
#include "parkvision/metrics.hpp"
#include "parkvision/model.hpp"
#include "parkvision/train.hpp"

namespace pv {

// Train once on `train_lots`, then evaluate each of `test_lots` separately on
// the held-out half of the split.
struct ExperimentPlan {
  std::vector<std::string> train_lots;
  std::vector<std::string> test_lots;
  Hyperparams hp;
  ModelSpec spec = ModelSpec::desk();
  double split_ratio = 0.5;
  std::uint64_t split_seed = 0;
};

struct ExperimentResult {
  std::vector<EvalReport> reports;  // one per test lot, in plan order
  TrainReport training;
};

// Scores every test-lot record of `held_out` with `model`.
std::vector<EvalReport> evaluate_model(const Model& model, const DatasetIndex& held_out,
                                       const std::vector<std::string>& train_lots,
                                       const std::vector<std::string>& test_lots);

ExperimentResult run_experiment(const ExperimentPlan& plan, const DatasetIndex& index);
ExperimentResult run_experiment(const ExperimentPlan& plan, const std::filesystem::path& data_root);

// The three cross-lot designs: each lot alone against every lot, then all
// lots together against every lot.
std::vector<ExperimentPlan> cross_lot_plans(const std::vector<std::string>& lots, const ExperimentPlan& base);

}  // namespace pv
