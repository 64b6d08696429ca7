// Copyright 2026 The crowdpoint Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crowdpoint/profile.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace crowdpoint {

ProfileReport profile_network(Network<float>& net, int64_t height, int64_t width, int runs, int warmup) {
  if (height <= 0 || width <= 0 || height % kInputMultiple != 0 || width % kInputMultiple != 0) {
    throw std::invalid_argument("profile: input size " + std::to_string(height) + "x" + std::to_string(width) +
                                " must be positive multiples of 32");
  }
  if (runs < 0 || warmup < 0) throw std::invalid_argument("profile: runs and warmup must be >= 0");
  ProfileReport r;
  r.height = height;
  r.width = width;
  r.encoder_params = net.backbone.parameter_count();
  r.decoder_params = net.decoder.parameter_count() + net.head.parameter_count();
  r.total_params = net.parameter_count();
  r.runs = runs;
  r.warmup = warmup;
  r.fused = net.fused();

  const bool was_training = net.training();
  net.set_training(false);
  NoGradGuard guard;
  // Mid-gray input; the cost does not depend on the values.
  const Var<float> x(Tensor<float>({1, 3, height, width}, 0.5f));
  reset_mac_count();
  net.forward(x);
  r.macs = mac_count();
  for (int i = 0; i < warmup; ++i) net.forward(x);
  if (runs > 0) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < runs; ++i) net.forward(x);
    const auto t1 = std::chrono::steady_clock::now();
    r.mean_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / runs;
  }
  net.set_training(was_training);
  return r;
}

std::string format_profile(const ProfileReport& r) {
  char buf[768];
  std::snprintf(buf, sizeof(buf),
                "input = %lldx%lld\nfused = %s\nencoder_params = %lld\ndecoder_params = %lld\ntotal_params = %lld\n"
                "macs = %lld\ngmacs = %.3f\ngflops = %.3f\nruns = %d\nwarmup = %d\nmean_forward_ms = %.3f\n"
                "reference_params = %lld\nreference_gflops = %.3f\n",
                static_cast<long long>(r.height), static_cast<long long>(r.width), r.fused ? "true" : "false",
                static_cast<long long>(r.encoder_params), static_cast<long long>(r.decoder_params),
                static_cast<long long>(r.total_params), static_cast<long long>(r.macs), r.macs / 1e9,
                2.0 * r.macs / 1e9, r.runs, r.warmup, r.mean_ms, static_cast<long long>(kReferenceParams),
                kReferenceGflops);
  return buf;
}

}  // namespace crowdpoint
