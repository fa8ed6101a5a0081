#pragma once

#include <string>

#include "matpac/config.hpp"

namespace testing_support {

/// Smallest configuration that still exercises every component; a step takes milliseconds.
inline matpac::RunConfig tiny_run_config(const std::string& pretrain_manifest = {}) {
  matpac::RunConfig c;
  c.seed = 3;
  c.pretrain_manifest = pretrain_manifest;
  c.frontend.crop_seconds = 1.0;
  c.frontend.stats_max_clips = 8;
  auto& m = c.model;
  m.d_model = 16;
  m.depth = 1;
  m.n_heads = 2;
  m.mlp_ratio = 2;
  m.d_pred = 8;
  m.pred_depth = 1;
  m.pred_heads = 2;
  m.head_hidden = 16;
  m.head_bottleneck = 8;
  m.max_time_patches = 8;
  auto& t = c.train;
  t.K = 16;
  t.epochs = 3;
  t.warmup_epochs = 1;
  t.batch_size = 8;
  t.base_lr = 1e-3;
  t.n_tau_epochs = 2;
  t.lambda_start = 0.99;
  t.lambda_end = 0.999;
  c.eval.segment_seconds = 1.0;
  c.eval.probe_epochs = 20;
  c.eval.probe_lr = 1e-2;
  c.eval.probe_batch = 16;
  c.eval.runs = 2;
  return c;
}

}  // namespace testing_support
