#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "liprcp/conformal.hpp"
#include "liprcp/lipnet.hpp"
#include "liprcp/scores.hpp"

namespace liprcp::attack {

enum class AttackObjective {
  MaximizeTrueScore,  // push the true label out of the set
  MinimizeTrueScore,
};

struct AttackConfig {
  double epsilon = 0.0;
  int steps = 40;
  /// Step length; 0 selects epsilon / 4.
  double step_size = 0.0;
  int restarts = 3;
  std::uint64_t seed = 0;
  AttackObjective objective = AttackObjective::MaximizeTrueScore;

  double effective_step() const { return step_size > 0.0 ? step_size : epsilon / 4.0; }
  void validate() const;
};

struct AttackResult {
  Eigen::VectorXd adversarial;
  double score = 0.0;  // true-label score at `adversarial`
  int gradient_evaluations = 0;
};

/// l2 projected gradient ascent (or descent) on the true-label score with
/// normalised steps. Restart 0 starts at x, the others at uniform points of
/// the ball. The best iterate seen over all restarts is returned and always
/// satisfies ||x~ - x|| <= epsilon.
///
/// `stop_when_score_above`: end early once the score exceeds this value
/// (MaximizeTrueScore only). `stream` selects the per-sample random stream.
AttackResult pgd_attack_detailed(const lipnet::LipschitzClassifier& model, const scores::ScoreSpec& spec,
                                 const Eigen::VectorXd& x, int y, const AttackConfig& cfg,
                                 std::uint64_t stream = 0,
                                 std::optional<double> stop_when_score_above = std::nullopt);

Eigen::VectorXd pgd_attack(const lipnet::LipschitzClassifier& model, const scores::ScoreSpec& spec,
                           const Eigen::VectorXd& x, int y, const AttackConfig& cfg, std::uint64_t stream = 0);

struct AttackOutcome {
  double coverage = 0.0;       // plug-in estimate of the coverage under attack
  double mean_set_size = 0.0;  // mean vanilla set size at the attacked points
  double max_perturbation = 0.0;
};

/// Attacks every row of `inputs` and measures vanilla set membership of the
/// true label at the attacked point. An attack on a sample stops once the
/// label has left the set, which does not change the membership outcome.
AttackOutcome coverage_under_attack(const lipnet::LipschitzClassifier& model, const conformal::CalibrationRecord& cal,
                                    const Eigen::MatrixXd& inputs, std::span<const int> labels,
                                    const AttackConfig& cfg);

}  // namespace liprcp::attack
