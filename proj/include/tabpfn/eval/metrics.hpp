#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace tabpfn::eval {

/// Mann-Whitney AUC of `score` for rows with label 1 against rows with label
/// 0; ties count half. Throws ContractError if either side is empty.
double roc_auc_binary(std::span<const std::uint8_t> positive, std::span<const double> score);

/// One-vs-one ROC AUC. Two classes: AUC of the class-1 probability. More:
/// for every pair of present classes, the mean of both directions restricted
/// to those rows, averaged over pairs. Throws ContractError with fewer than
/// two classes present.
double roc_auc_ovo(std::span<const std::uint16_t> y, std::span<const float> probabilities, std::size_t num_classes);

/// Mean negative log-likelihood with probabilities floored at 1e-12.
double cross_entropy(std::span<const std::uint16_t> y, std::span<const float> probabilities, std::size_t num_classes);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(std::span<const std::uint16_t> y, std::span<const float> probabilities, std::size_t num_classes);

}  // namespace tabpfn::eval
