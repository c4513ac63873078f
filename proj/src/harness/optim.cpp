#include <cmath>

#include "common/error.hpp"
#include "harness/harness.hpp"

namespace b4g::harness {

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    fail(ErrorKind::value, "got " + std::to_string(predictions.size()) + " predictions for " +
                               std::to_string(labels.size()) + " labels");
  if (labels.empty()) fail(ErrorKind::value, "cannot compute metrics over an empty instance list");
  Metrics m;
  m.total = labels.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int g = labels[i], p = predictions[i];
    if (g < 0 || g >= 3 || p < 0 || p >= 3)
      fail(ErrorKind::value, "label space mismatch: class " + std::to_string(g < 0 || g >= 3 ? g : p) +
                                 " outside {0, 1, 2}");
    ++m.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
    if (g == p) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double tp = static_cast<double>(m.confusion[c][c]);
    double predicted = 0, gold = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      predicted += static_cast<double>(m.confusion[k][c]);
      gold += static_cast<double>(m.confusion[c][k]);
    }
    // F1 = 2TP / (2TP + FP + FN)
    const double denom = predicted + gold;
    f1_sum += (tp > 0 && denom > 0) ? 2.0 * tp / denom : 0.0;
  }
  m.macro_f1 = f1_sum / 3.0;
  return m;
}

LinearSchedule::LinearSchedule(double peak, std::size_t total_steps, double warmup_fraction)
    : peak_(peak),
      total_(total_steps),
      warmup_(static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)))) {
  if (warmup_ > total_) warmup_ = total_;
}

double LinearSchedule::at(std::size_t step) const {
  if (step >= total_) return 0.0;
  if (step < warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  return peak_ * static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

Adam::Adam(std::vector<Group> groups, double beta1, double beta2, double eps)
    : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& g : groups_) {
    std::vector<ag::Matrix> m, v;
    for (const auto& p : g.params) {
      m.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
      v.push_back(ag::Matrix::Zero(p.rows(), p.cols()));
    }
    m_.push_back(std::move(m));
    v_.push_back(std::move(v));
  }
}

void Adam::step() {
  const double t = static_cast<double>(t_ + 1);
  const double c1 = 1.0 - std::pow(beta1_, t), c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    auto& g = groups_[gi];
    const double lr = g.schedule.at(t_);
    for (std::size_t i = 0; i < g.params.size(); ++i) {
      auto p = g.params[i];
      const ag::Matrix& grad = p.grad();
      if (grad.size() == 0) continue;
      m_[gi][i] = beta1_ * m_[gi][i] + (1.0 - beta1_) * grad;
      v_[gi][i] = beta2_ * v_[gi][i] + (1.0 - beta2_) * grad.cwiseProduct(grad);
      if (lr == 0.0) continue;
      p.mutable_value().array() -=
          lr * (m_[gi][i].array() / c1) / ((v_[gi][i].array() / c2).sqrt() + eps_);
    }
  }
  ++t_;
}

}  // namespace b4g::harness
