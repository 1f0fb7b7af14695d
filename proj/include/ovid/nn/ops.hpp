#pragma once

// Differentiable primitives. Shapes are checked eagerly and violations raise
// Error{ShapeMismatch}.

#include <span>
#include <vector>

#include "ovid/nn/tape.hpp"
#include "ovid/rng.hpp"

namespace ovid::nn {

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kProbabilityClamp = 1e-12;

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a (n x c) plus a 1 x c row broadcast over every row.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Per-row normalisation over the feature axis, then gain * x_hat + bias.
Var layer_norm(Var x, Var gain, Var bias, double epsilon = kLayerNormEpsilon);
/// Horizontal concatenation of tensors with equal row counts.
Var concat_cols(std::span<const Var> parts);

enum class Mode { Train, Eval };

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in Eval mode.
/// Raises Error{InvalidRate} unless 0 <= rate < 1.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

/// Mean binary cross-entropy of an n x 1 prediction column against 0/1 targets.
Var bce_loss(Var predictions, std::span<const double> targets);
/// Sum of squares of every entry, as a 1 x 1 value.
Var sum_squares(Var a);
/// Mean of 1 x 1 values.
Var mean(std::span<const Var> scalars);
/// Vertical stacking of 1 x c rows (used to batch per-example outputs).
Var stack_rows(std::span<const Var> rows);

/// While set (per thread), relu appends every input value to `sink`. Lets a
/// finite-difference check tell when a perturbation crossed a kink.
void set_relu_probe(std::vector<double>* sink);

} // namespace ovid::nn
