#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpmflow/loss.hpp"
#include "mpmflow/surrogate.hpp"

namespace mpmflow {

struct TrainConfig {
  std::int32_t batch_size = 8;
  double learning_rate = 1e-4;
  std::int64_t max_iterations = 100000;
  std::int32_t window = 4;
  double huber_delta = 1.0;
  std::uint64_t seed = 1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  LossKind loss = LossKind::Huber;  // Mse/Mae are for ablations only
  std::int64_t checkpoint_every = 0;  // 0 disables checkpoints
  std::string checkpoint_dir;
  //! Stop once loss <= ratio * initial loss; 0 runs to max_iterations.
  double stop_ratio = 0.0;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

//! One training sample: `window` consecutive frames plus the target frame
//! that both the prediction branch and the autoencoder branch are scored
//! against.
struct TrainReport {
  std::vector<double> loss_curve;  // one entry per iteration
  std::int64_t iterations = 0;
  bool aborted = false;  // non-finite loss; model restored from the last
                         // checkpoint when one exists
};

//! Joint prediction + autoencoder training over sequences of consecutive
//! normalized frames (each sequence at least window+1 long). Per
//! iteration, batch_size windows are drawn seeded-uniformly across
//! sequences and valid start offsets; gradients accumulate in a fixed
//! order, so a fixed seed reproduces the run bit-exactly single-threaded.
//! learning_rate 0 is allowed and leaves parameters bit-identical (the
//! moment estimates still advance).
TrainReport train(SurrogateModel& model,
                  const std::vector<std::vector<Tensor4>>& sequences,
                  const TrainConfig& cfg);

//! Loss and parameter gradients of one sample (window + target), using
//! the model's cached forward paths. Used by train() and the gradient
//! tests. Gradients accumulate into the model; callers zero them first.
double sample_loss_backward(SurrogateModel& model,
                            const std::vector<Tensor4>& window_frames,
                            const Tensor4& target, double delta,
                            LossKind kind);

//! Forward-only counterpart of sample_loss_backward.
double sample_loss(const SurrogateModel& model,
                   const std::vector<Tensor4>& window_frames,
                   const Tensor4& target, double delta, LossKind kind);

//! iteration,loss rows.
void save_loss_curve(const std::string& path,
                     const std::vector<double>& curve);

}  // namespace mpmflow
