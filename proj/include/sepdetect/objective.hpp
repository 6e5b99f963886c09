#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sepdetect/data.hpp"
#include "sepdetect/numerics.hpp"

namespace sepdetect {

struct ClassMeans {
  std::vector<Vector> means;
  std::vector<std::size_t> counts;
};

using ClassPair = std::pair<Label, Label>;

// Per-class mean of the rows of `z`. Every class in [0, K) must be present.
ClassMeans class_means(const Matrix& z, std::span<const Label> labels, std::size_t num_classes);

struct SeparationResult {
  double value = 0.0;  // -min_{i<j} |mu_i - mu_j|^2
  ClassPair pair{0, 1};
};

// Ties resolve to the lexicographically smallest (i, j).
SeparationResult separation_loss(const ClassMeans& means);

// -log softmax(logits)[y], via log-sum-exp.
double cross_entropy(std::span<const double> logits, Label y);

struct LossBreakdown {
  double ce = 0.0;
  double separation = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  ClassPair argmin_pair{0, 1};
};

struct CombinedLoss {
  LossBreakdown loss;
  Matrix d_logits;  // B x K
  Matrix d_z;       // B x h
};

// total = mean_n CE(logits_n, y_n) + lambda * separation(class_means(Z)).
// The separation gradient reaches only the samples of the two closest classes.
CombinedLoss combined_loss_and_grads(const Matrix& z, const Matrix& logits,
                                     std::span<const Label> labels, std::size_t num_classes,
                                     double lambda);

// sqrt of the smallest squared distance between class means of `z`.
double min_class_mean_distance(const Matrix& z, std::span<const Label> labels,
                               std::size_t num_classes);

}  // namespace sepdetect
