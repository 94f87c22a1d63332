#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "parkvision/dataset.hpp"
#include "parkvision/errors.hpp"
#include "parkvision/train.hpp"

namespace pv {
namespace {

class TrainTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    SynthOptions opts;
    opts.n_per_label = 40;
    opts.seed = 5;
    synth_generate(dir_->path(), opts);
    index_ = new DatasetIndex(scan_tree(dir_->path()));
  }
  static void TearDownTestSuite() {
    delete index_;
    delete dir_;
  }

  static Hyperparams quick(std::size_t iterations) {
    Hyperparams hp;
    hp.iterations = iterations;
    hp.batch_size = 16;
    return hp;
  }

  static testing::TempDir* dir_;
  static DatasetIndex* index_;
};

testing::TempDir* TrainTest::dir_ = nullptr;
DatasetIndex* TrainTest::index_ = nullptr;

TEST(Hyperparams, DefaultsAreTheReferenceRecipe) {
  const Hyperparams hp;
  EXPECT_EQ(hp.lr, 0.01);
  EXPECT_EQ(hp.weight_decay, 0.0005);
  EXPECT_EQ(hp.batch_size, 128u);
  EXPECT_EQ(hp.iterations, 3000u);
  EXPECT_TRUE(hp.freeze_conv);
  EXPECT_EQ(hp.lr_decay_factor, 0.1);
  EXPECT_EQ(hp.lr_decay_every, 1000u);
}

TEST(Hyperparams, Validation) {
  Hyperparams hp;
  hp.iterations = 0;
  EXPECT_THROW(validate(hp), ValidationError);
  hp = {};
  hp.batch_size = 0;
  EXPECT_THROW(validate(hp), ValidationError);
  hp = {};
  hp.lr = 0;
  EXPECT_THROW(validate(hp), ValidationError);
  hp = {};
  hp.weight_decay = -1;
  EXPECT_THROW(validate(hp), ValidationError);
  EXPECT_NO_THROW(validate(Hyperparams{}));
}

TEST(Hyperparams, StepDecay) {
  const Hyperparams hp;
  EXPECT_DOUBLE_EQ(learning_rate_at(hp, 0), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate_at(hp, 999), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate_at(hp, 1000), 0.001);
  EXPECT_NEAR(learning_rate_at(hp, 2999), 1e-4, 1e-18);
}

TEST_F(TrainTest, SingleLabelDatasetRejected) {
  std::vector<SampleRecord> only_vacant;
  for (const auto& r : index_->records()) {
    if (r.label == Occupancy::kVacant) only_vacant.push_back(r);
  }
  Model m = build(ModelSpec::desk());
  EXPECT_THROW(fine_tune(m, DatasetIndex(only_vacant), quick(1)), ValidationError);
}

TEST_F(TrainTest, OneFrozenStepChangesOnlyTheHead) {
  Model m = build(ModelSpec::desk());
  const Model before = m;
  fine_tune(m, *index_, quick(1));
  for (std::size_t i = 0; i < m.conv_layer_count(); ++i) {
    EXPECT_EQ(m.params()[i].weights, before.params()[i].weights) << i;
    EXPECT_EQ(m.params()[i].bias, before.params()[i].bias) << i;
  }
  bool head_changed = false;
  for (std::size_t i = m.conv_layer_count(); i < m.params().size(); ++i) {
    head_changed = head_changed || m.params()[i].weights != before.params()[i].weights;
  }
  EXPECT_TRUE(head_changed);
}

TEST_F(TrainTest, UnfrozenTrainingMovesConvWeights) {
  Model m = build(ModelSpec::desk());
  const Model before = m;
  Hyperparams hp = quick(3);
  hp.batch_size = 4;
  hp.freeze_conv = false;
  hp.weight_decay = 0;  // so any change comes from back-propagated gradients
  fine_tune(m, *index_, hp);
  bool changed = false;
  for (std::size_t i = 0; i < m.conv_layer_count(); ++i) {
    changed = changed || m.params()[i].weights != before.params()[i].weights;
  }
  EXPECT_TRUE(changed);
}

TEST_F(TrainTest, DeterministicLossCurve) {
  Model a = build(ModelSpec::desk());
  Model b = build(ModelSpec::desk());
  const TrainReport ra = fine_tune(a, *index_, quick(40));
  const TrainReport rb = fine_tune(b, *index_, quick(40));
  EXPECT_EQ(ra.loss_curve, rb.loss_curve);
  EXPECT_EQ(ra.loss_curve.size(), 40 / kLossLogStride);
  for (const auto& p : ra.loss_curve) EXPECT_TRUE(std::isfinite(p.mean_loss));
  EXPECT_GE(ra.final_train_accuracy, 0.0);
  EXPECT_LE(ra.final_train_accuracy, 1.0);
}

TEST_F(TrainTest, WindowedLossDoesNotIncrease) {
  Model m = build(ModelSpec::desk());
  const TrainReport r = fine_tune(m, *index_, quick(300));
  std::vector<double> windows;
  for (std::size_t w = 0; w < 3; ++w) {
    double sum = 0;
    for (std::size_t i = 0; i < 10; ++i) sum += r.loss_curve[w * 10 + i].mean_loss;
    windows.push_back(sum / 10);
  }
  EXPECT_LE(windows[1], windows[0]);
  EXPECT_LE(windows[2], windows[1] + 1e-3);
  EXPECT_GE(r.final_train_accuracy, 0.99);
}

TEST_F(TrainTest, DivergenceReportsIteration) {
  Model m = build(ModelSpec::desk());
  Hyperparams hp = quick(50);
  hp.lr = 1e30;
  try {
    fine_tune(m, *index_, hp);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.iteration(), 1u);
    EXPECT_LE(e.iteration(), 50u);
  }
}

TEST(TrainStep, ReturnsFiniteLossAndUpdates) {
  Model m = build(ModelSpec::desk());
  m.set_conv_frozen(true);
  Tensor inputs({2, 3, 64, 64}, 0.1f);
  inputs.data()[5] = -0.3f;
  const std::vector<int> labels{0, 1};
  const double loss = train_step(m, inputs, labels, 0.01, 0.0);
  EXPECT_NEAR(loss, std::log(2.0), 1e-6);  // zero head: both classes at 0.5
}

}  // namespace
}  // namespace pv
