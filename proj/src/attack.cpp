#include "liprcp/attack.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "liprcp/error.hpp"
#include "liprcp/parallel.hpp"
#include "liprcp/rng.hpp"

namespace liprcp::attack {
namespace {

using Vector = Eigen::VectorXd;

// Direction of increasing true-label score in logit space, up to a positive
// factor. The factor (sigmoid derivative, softmax probability) is dropped so
// that saturated scores still yield a usable direction.
Vector score_ascent_direction(const scores::ScoreSpec& spec, const Vector& logits, int y) {
  Vector up = Vector::Zero(logits.size());
  if (spec.kind == scores::ScoreKind::LacSigmoid) {
    up[y] = -1.0;
    return up;
  }
  const Vector z = logits / spec.temperature;
  const Vector e = (z.array() - z.maxCoeff()).exp().matrix();
  up = e / e.sum();
  up[y] -= 1.0;
  return up;
}

// The test is on the recomputed difference, so rounding in center + d
// cannot push the returned point outside the ball.
void project_to_ball(Vector& x, const Vector& center, double radius) {
  if ((x - center).norm() <= radius) return;
  Vector d = x - center;
  d *= radius / d.norm();
  x = center + d;
  while ((x - center).norm() > radius) {
    d *= 1.0 - 1e-14;
    x = center + d;
  }
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("attack radius must be finite and >= 0");
  if (steps < 0) throw DomainError("attack steps must be >= 0");
  if (restarts < 1) throw DomainError("attack needs at least one restart");
  if (step_size < 0.0) throw DomainError("attack step size must be >= 0");
}

AttackResult pgd_attack_detailed(const lipnet::LipschitzClassifier& model, const scores::ScoreSpec& spec,
                                 const Eigen::VectorXd& x, int y, const AttackConfig& cfg, std::uint64_t stream,
                                 std::optional<double> stop_when_score_above) {
  cfg.validate();
  if (y < 0 || y >= model.num_classes()) throw DimensionError("attack label out of range");
  const double sign = cfg.objective == AttackObjective::MaximizeTrueScore ? 1.0 : -1.0;
  const bool can_stop = stop_when_score_above.has_value() && cfg.objective == AttackObjective::MaximizeTrueScore;

  AttackResult best;
  best.adversarial = x;
  {
    const Vector logits = lipnet::forward(model, x);
    best.score = scores::score(spec, scores::as_span(logits), y);
  }
  if (cfg.epsilon == 0.0) return best;
  if (can_stop && best.score > *stop_when_score_above) return best;

  auto better = [&](double candidate) { return sign * candidate > sign * best.score; };
  const double step = cfg.effective_step();
  const Rng base = Rng(cfg.seed).substream("attack").substream(stream);
  const auto dim = x.size();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Vector current = x;
    if (restart > 0) {
      Rng rng = base.substream(static_cast<std::uint64_t>(restart));
      Vector dir(dim);
      for (Eigen::Index j = 0; j < dim; ++j) dir[j] = rng.normal();
      const double radius = cfg.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
      current = x + dir.normalized() * radius;
      project_to_ball(current, x, cfg.epsilon);
    }
    for (int it = 0; it <= cfg.steps; ++it) {
      double current_score = 0.0;
      const auto traced = lipnet::logits_and_vjp(model, current, [&](const Vector& logits) {
        current_score = scores::score(spec, scores::as_span(logits), y);
        return Vector(sign * score_ascent_direction(spec, logits, y));
      });
      ++best.gradient_evaluations;
      if (better(current_score)) {
        best.score = current_score;
        best.adversarial = current;
        if (can_stop && best.score > *stop_when_score_above) return best;
      }
      if (it == cfg.steps) break;
      const double g = traced.input_gradient.norm();
      if (!(g > 0.0) || !std::isfinite(g)) break;
      current += (step / g) * traced.input_gradient;
      project_to_ball(current, x, cfg.epsilon);
    }
  }
  return best;
}

Eigen::VectorXd pgd_attack(const lipnet::LipschitzClassifier& model, const scores::ScoreSpec& spec,
                           const Eigen::VectorXd& x, int y, const AttackConfig& cfg, std::uint64_t stream) {
  return pgd_attack_detailed(model, spec, x, y, cfg, stream).adversarial;
}

AttackOutcome coverage_under_attack(const lipnet::LipschitzClassifier& model, const conformal::CalibrationRecord& cal,
                                    const Eigen::MatrixXd& inputs, std::span<const int> labels,
                                    const AttackConfig& cfg) {
  cfg.validate();
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(inputs.rows()) != n) throw DimensionError("one label per input row required");
  if (n == 0) throw DimensionError("no test points to attack");
  std::vector<unsigned char> covered(n, 0);
  std::vector<std::size_t> sizes(n, 0);
  std::vector<double> moved(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const Vector x = inputs.row(static_cast<Eigen::Index>(i)).transpose();
    const AttackResult result =
        pgd_attack_detailed(model, cal.score_spec, x, labels[i], cfg, i, cal.q_alpha);
    const Vector logits = lipnet::forward(model, result.adversarial);
    const auto set = conformal::prediction_set(cal, scores::as_span(logits));
    covered[i] = set.contains(labels[i]) ? 1 : 0;
    sizes[i] = set.size();
    moved[i] = (result.adversarial - x).norm();
  });
  AttackOutcome out;
  std::size_t hits = 0;
  std::size_t total_size = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += covered[i];
    total_size += sizes[i];
    out.max_perturbation = std::max(out.max_perturbation, moved[i]);
  }
  out.coverage = static_cast<double>(hits) / static_cast<double>(n);
  out.mean_set_size = static_cast<double>(total_size) / static_cast<double>(n);
  return out;
}

}  // namespace liprcp::attack
