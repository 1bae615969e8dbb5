#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace kinet::nn {

/// Guard added inside both logarithms of the binary cross-entropy.
inline constexpr double kLossEpsilon = 2e-7;

struct LossResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline int predicted_class(double prob) { return prob >= 0.5 ? 1 : 0; }

inline double bce_term(int y, double p) {
    return y == 1 ? -std::log(p + kLossEpsilon) : -std::log(1.0 - p + kLossEpsilon);
}

/// Mean binary cross-entropy and thresholded accuracy (p >= 0.5 is class 1).
inline LossResult bce_loss(std::span<const int> labels, std::span<const double> probs) {
    if (labels.size() != probs.size()) throw std::invalid_argument("bce_loss: label/probability count mismatch");
    if (labels.empty()) throw std::invalid_argument("bce_loss: empty batch");
    double sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("bce_loss: labels must be 0 or 1");
        sum += bce_term(labels[i], probs[i]);
        correct += predicted_class(probs[i]) == labels[i];
    }
    const double n = static_cast<double>(labels.size());
    return {sum / n, static_cast<double>(correct) / n};
}

/// Exact derivative of one sample's loss term with respect to its logit z,
/// where p = sigmoid(z).
inline double bce_logit_gradient(int y, double p) {
    const double dl_dp = y == 1 ? -1.0 / (p + kLossEpsilon) : 1.0 / (1.0 - p + kLossEpsilon);
    return dl_dp * p * (1.0 - p);
}

/// Per-sample dL/dz for the batch-mean loss.
inline std::vector<double> bce_logit_gradients(std::span<const int> labels, std::span<const double> probs) {
    std::vector<double> g(labels.size());
    const double n = static_cast<double>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) g[i] = bce_logit_gradient(labels[i], probs[i]) / n;
    return g;
}

}  // namespace kinet::nn
