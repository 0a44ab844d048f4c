#pragma once

#include "mpmflow/tensor.hpp"

namespace mpmflow {

//! Training penalty. Huber is the shipped loss; the squared and absolute
//! variants exist for ablation comparisons only.
enum class LossKind { Huber, Mse, Mae };

//! Elementwise penalty of (x - xhat), mean-reduced over all elements.
//! Huber: quadratic inside |d| <= delta, linear with matched value and
//! slope outside.
double penalty(const Tensor4& x, const Tensor4& xhat, double delta,
               LossKind kind = LossKind::Huber);

inline double huber(const Tensor4& x, const Tensor4& xhat, double delta) {
  return penalty(x, xhat, delta, LossKind::Huber);
}

//! Forward spatial differences of every channel, zero at the far face of
//! each axis: output channel 3*c + a holds d/d(axis a) of channel c.
Tensor4 spatial_gradient(const Tensor4& x);

//! Per-pair training term: for each channel, penalty on values plus
//! penalty on spatial gradients, summed over channels.
double pair_loss(const Tensor4& x, const Tensor4& xhat, double delta,
                 LossKind kind = LossKind::Huber);

//! Same value as pair_loss, accumulating d(loss)/d(xhat) into gxhat
//! (which must already have xhat's shape).
double pair_loss_backward(const Tensor4& x, const Tensor4& xhat,
                          double delta, Tensor4& gxhat,
                          LossKind kind = LossKind::Huber);

}  // namespace mpmflow
