#include <catch_amalgamated.hpp>

#include <cmath>

#include "wam/denoise_runtime.hpp"
#include "wam/toy_world_model.hpp"

using namespace wam;
using namespace wam::toy;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("exact endpoints", "[toy]") {
  CHECK(exact_endpoint({0.0, 1.0}, 0.0, 1.0) == 1.0);
  CHECK_THAT(exact_endpoint({-1.0, 0.0}, 1.0, 1.0), WithinAbs(0.367879441171442, 1e-15));
  CHECK_THAT(exact_endpoint({-1.0, 1.0}, 0.0, 1.0), WithinAbs(0.632120558828558, 1e-15));
  CHECK_THAT(exact_endpoint({2.0, 3.0}, 0.5, 0.25), WithinAbs(std::exp(0.5) * 0.5 + 1.5 * (std::exp(0.5) - 1), 1e-14));
}

TEST_CASE("Euler on a linear field converges at first order", "[toy]") {
  const LinearField f{-0.8, 0.3};
  const CoupledField field(f, f, 1, 1);
  denoise::LatentState init{{0.4}, {-1.2}};
  const double exact = exact_sampler_endpoint(f, init.action[0]);
  std::vector<double> errs;
  for (int steps : {10, 20, 40, 80}) {
    denoise::SamplerConfig cfg;
    cfg.total_steps = steps;
    cfg.joint_prefix_N = steps;
    cfg.timeshift_video = 1.0;
    errs.push_back(std::abs(denoise::sample_joint(field, init, cfg).state.action[0] - exact));
  }
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double order = std::log2(errs[i - 1] / errs[i]);
    CHECK(order >= 0.8);
    CHECK(order <= 1.2);
  }
}

TEST_CASE("target field lands on its target", "[toy]") {
  const TargetField f({1.0, 2.0}, {-0.5, 0.25, 3.0});
  denoise::LatentState init{{0.3, -0.1}, {2.0, 2.0, 2.0}};
  denoise::SamplerConfig cfg;
  cfg.total_steps = 9;
  cfg.joint_prefix_N = 2;
  const auto r = denoise::sample_v2a(f, init, cfg);
  CHECK_THAT(r.state.action[0], WithinAbs(-0.5, 1e-12));
  CHECK_THAT(r.state.action[2], WithinAbs(3.0, 1e-12));
}

TEST_CASE("coupled field validation", "[toy]") {
  CHECK_THROWS_AS(CoupledField({0, 0}, {0, 0}, 2, 2, {1.0}), ValidationError);
  CHECK_THROWS_AS(CoupledField({NAN, 0}, {0, 0}, 2, 2), ValidationError);
  CoupledField f({0, 0}, {0, 0}, 2, 2);
  CHECK_THROWS_AS(f.set_conditioned_video_bias({1.0}), ValidationError);
}

TEST_CASE("latency accounting", "[toy]") {
  LatencyModel base;
  const auto b = latency_of(base);
  CHECK_THAT(b.latency_s, WithinAbs(4.90, 1e-12));
  CHECK_THAT(b.frequency_hz, WithinAbs(1.0 / 4.9, 1e-12));

  LatencyModel thirty = base;
  thirty.steps = 30;
  const auto t = latency_of(thirty);
  CHECK_THAT(t.latency_s, WithinAbs(3.00, 1e-12));
  CHECK_THAT(t.latency_s, WithinRel(2.90, 0.05));

  LatencyModel none = base;
  none.steps = 0;
  CHECK_THAT(latency_of(none).latency_s, WithinAbs(0.150, 1e-15));

  // Affine in steps, frequency strictly decreasing.
  Latency prev = latency_of(none);
  for (int s = 1; s <= 60; ++s) {
    LatencyModel m = base;
    m.steps = s;
    const auto l = latency_of(m);
    CHECK_THAT(l.latency_s - prev.latency_s, WithinAbs(0.095, 1e-12));
    CHECK(l.frequency_hz < prev.frequency_hz);
    prev = l;
  }

  CHECK(cached_eval_count(30, 0) == 30);
  CHECK(cached_eval_count(30, 4) == 7);
  CHECK(cached_eval_count(1, 4) == 1);
  CHECK(cached_eval_count(0, 4) == 0);

  LatencyModel bad = base;
  bad.per_step_ms = -1.0;
  CHECK_THROWS_AS(latency_of(bad), ValidationError);
}

TEST_CASE("plant", "[toy]") {
  ToyPlant p(2, 0.02);
  p.velocity = {1.0, -2.0};
  const auto q = plant_step(p, {0.0, 0.0});
  CHECK_THAT(q.position[0], WithinAbs(0.02, 1e-15));
  CHECK_THAT(q.position[1], WithinAbs(-0.04, 1e-15));

  ToyPlant r(1, 0.01);
  for (int n = 1; n <= 50; ++n) {
    r = plant_step(r, {1.0});
    CHECK_THAT(r.position[0], WithinAbs(1e-4 * n * (n + 1) / 2.0, 1e-12));
  }
  CHECK_THROWS_AS(plant_step(r, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(ToyPlant(1, 0.0), ValidationError);
}
