#include "sepdetect/objective.hpp"

#include <cmath>
#include <string>

#include "sepdetect/error.hpp"

namespace sepdetect {

ClassMeans class_means(const Matrix& z, std::span<const Label> labels, std::size_t num_classes) {
  if (z.rows() != labels.size()) {
    throw ValidationError("class_means: " + std::to_string(z.rows()) + " rows vs " +
                          std::to_string(labels.size()) + " labels");
  }
  ClassMeans cm;
  cm.means.assign(num_classes, Vector(z.cols(), 0.0));
  cm.counts.assign(num_classes, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const Label y = labels[n];
    if (y >= num_classes) throw ValidationError("class_means: label out of range");
    const auto row = z.row(n);
    for (std::size_t k = 0; k < row.size(); ++k) cm.means[y][k] += row[k];
    ++cm.counts[y];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (cm.counts[c] == 0) {
      throw ValidationError("class_means: class " + std::to_string(c) + " has no samples");
    }
    const double inv = 1.0 / static_cast<double>(cm.counts[c]);
    for (double& v : cm.means[c]) v *= inv;
  }
  return cm;
}

SeparationResult separation_loss(const ClassMeans& means) {
  const std::size_t k = means.means.size();
  if (k < 2) throw ValidationError("separation_loss needs at least 2 classes");
  SeparationResult best;
  double best_d2 = INFINITY;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double d2 = squared_distance(means.means[i], means.means[j]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best.pair = {i, j};
      }
    }
  }
  best.value = best_d2 == 0.0 ? 0.0 : -best_d2;
  return best;
}

double cross_entropy(std::span<const double> logits, Label y) {
  if (y >= logits.size()) {
    throw ValidationError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
  }
  return log_sum_exp(logits) - logits[y];
}

CombinedLoss combined_loss_and_grads(const Matrix& z, const Matrix& logits,
                                     std::span<const Label> labels, std::size_t num_classes,
                                     double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be finite and >= 0");
  }
  const std::size_t batch = labels.size();
  if (batch == 0) throw ValidationError("empty batch");
  if (z.rows() != batch || logits.rows() != batch) {
    throw ValidationError("Z, logits and labels do not align");
  }
  if (logits.cols() != num_classes) throw ValidationError("logits width != num_classes");

  const ClassMeans cm = class_means(z, labels, num_classes);
  const SeparationResult sep = separation_loss(cm);

  CombinedLoss out;
  out.d_logits = Matrix(batch, num_classes);
  out.d_z = Matrix(batch, z.cols());
  const double inv_b = 1.0 / static_cast<double>(batch);
  double ce_sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    ce_sum += cross_entropy(logits.row(n), labels[n]);
    const Vector p = stable_softmax(logits.row(n));
    auto d = out.d_logits.row(n);
    for (std::size_t k = 0; k < num_classes; ++k) {
      d[k] = (p[k] - (k == labels[n] ? 1.0 : 0.0)) * inv_b;
    }
  }

  if (lambda > 0.0) {
    const auto [ci, cj] = sep.pair;
    const Vector& mi = cm.means[ci];
    const Vector& mj = cm.means[cj];
    const double scale_i = lambda * -2.0 / static_cast<double>(cm.counts[ci]);
    const double scale_j = lambda * 2.0 / static_cast<double>(cm.counts[cj]);
    for (std::size_t n = 0; n < batch; ++n) {
      if (labels[n] != ci && labels[n] != cj) continue;
      const double s = labels[n] == ci ? scale_i : scale_j;
      auto d = out.d_z.row(n);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = s * (mi[k] - mj[k]);
    }
  }

  out.loss.ce = ce_sum * inv_b;
  out.loss.separation = sep.value;
  out.loss.lambda = lambda;
  out.loss.total = out.loss.ce + lambda * sep.value;
  out.loss.argmin_pair = sep.pair;
  return out;
}

double min_class_mean_distance(const Matrix& z, std::span<const Label> labels,
                               std::size_t num_classes) {
  return std::sqrt(-separation_loss(class_means(z, labels, num_classes)).value);
}

}  // namespace sepdetect
