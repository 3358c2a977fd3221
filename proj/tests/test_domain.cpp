#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <map>

#include "netcvr/common.hpp"
#include "netcvr/domain.hpp"

using namespace netcvr;

namespace {

ClickEvent make_event(double tc, std::optional<double> tv = {}, std::optional<double> tr = {}) {
  ClickEvent e;
  e.feat.fill(0);
  e.t_c = tc;
  e.t_v = tv;
  e.t_r = tr;
  return e;
}

WindowConfig windows(double obs_v, double obs_r, double attr_v = 3.0, double attr_r = 3.0) {
  WindowConfig w;
  w.w_obs_v = obs_v;
  w.w_obs_r = obs_r;
  w.w_attr_v = attr_v;
  w.w_attr_r = attr_r;
  return w;
}

// Random events with outcome times clustered around the window scales so
// every trajectory type actually occurs.
ClickEvent random_event(Rng& rng) {
  ClickEvent e = make_event(rng.uniform01() * 10.0);
  if (rng.bernoulli(0.6)) {
    e.t_v = e.t_c + rng.exponential(rng.bernoulli(0.5) ? 120.0 : 0.8);
    if (rng.bernoulli(0.5)) e.t_r = *e.t_v + rng.exponential(rng.bernoulli(0.5) ? 120.0 : 0.8);
  }
  return e;
}

}  // namespace

TEST_CASE("classify_trajectory: spec examples") {
  WindowConfig w = windows(0.01, 0.01);
  CHECK(classify_trajectory(make_event(0.0), w) == TrajectoryType::nConv);
  CHECK(classify_trajectory(make_event(0.0, 0.005), w) == TrajectoryType::iConv);
  CHECK(classify_trajectory(make_event(0.0, 0.5, 0.505), w) == TrajectoryType::dConv_iRefund);
}

TEST_CASE("classify_trajectory: attribution truncation and boundaries") {
  WindowConfig w = windows(0.01, 0.01);
  // conversion outside the attribution window is treated as absent
  CHECK(classify_trajectory(make_event(0.0, 3.5), w) == TrajectoryType::nConv);
  // refund outside its attribution window is treated as absent
  CHECK(classify_trajectory(make_event(0.0, 0.5, 4.0), w) == TrajectoryType::dConv);
  // boundary counts as inside for both windows
  CHECK(classify_trajectory(make_event(0.0, 0.01), w) == TrajectoryType::iConv);
  CHECK(classify_trajectory(make_event(0.0, 0.02), w) == TrajectoryType::dConv);
  CHECK(classify_trajectory(make_event(0.0, 0.02, 0.03), w) == TrajectoryType::dConv_iRefund);
  CHECK(classify_trajectory(make_event(0.0, 0.005, 0.5), w) == TrajectoryType::iConv_dRefund);
  CHECK(classify_trajectory(make_event(0.0, 0.5, 1.5), w) == TrajectoryType::dConv_dRefund);
  CHECK(classify_trajectory(make_event(0.0, 0.005, 0.01), w) == TrajectoryType::iConv_iRefund);
}

TEST_CASE("resolve_labels: spec examples") {
  WindowConfig w = windows(0.01, 0.01);
  ResolvedLabels a = resolve_labels(make_event(0.0), w);
  CHECK(a.y == 0);
  CHECK(a.z == 0);
  CHECK(a.net == 0);
  ResolvedLabels b = resolve_labels(make_event(0.0, 1.0, 2.0), w);
  CHECK(b.y == 1);
  CHECK(b.z == 1);
  CHECK(b.net == 0);
  ResolvedLabels c = resolve_labels(make_event(0.0, 4.0), w);
  CHECK(c.y == 0);
  CHECK(c.net == 0);
  ResolvedLabels d = resolve_labels(make_event(0.0, 1.0), w);
  CHECK(d.y == 1);
  CHECK(d.z == 0);
  CHECK(d.net == 1);
}

TEST_CASE("partition: the seven trajectory counts sum to the event count") {
  Rng rng(11);
  WindowConfig w = windows(0.01, 0.02);
  std::map<TrajectoryType, int> counts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) counts[classify_trajectory(random_event(rng), w)]++;
  int total = 0;
  for (auto& [t, c] : counts) total += c;
  CHECK(total == n);
  CHECK(counts.size() == 7);  // all types occur at this mix
}

TEST_CASE("consistency between trajectory class and resolved labels") {
  Rng rng(12);
  WindowConfig w = windows(0.01, 0.01);
  for (int i = 0; i < 20000; ++i) {
    ClickEvent e = random_event(rng);
    TrajectoryType t = classify_trajectory(e, w);
    ResolvedLabels lab = resolve_labels(e, w);
    const bool conv_no_refund = t == TrajectoryType::iConv || t == TrajectoryType::dConv;
    const bool refund = t == TrajectoryType::iConv_iRefund || t == TrajectoryType::iConv_dRefund ||
                        t == TrajectoryType::dConv_iRefund || t == TrajectoryType::dConv_dRefund;
    CHECK(conv_no_refund == (lab.y == 1 && lab.z == 0));
    CHECK(refund == (lab.z == 1));
    CHECK(lab.net == lab.y * (1 - lab.z));
    if (lab.z) CHECK(lab.y);
  }
}

TEST_CASE("monotonicity: growing w_obs_v only moves dConv to iConv") {
  Rng rng(13);
  for (int i = 0; i < 20000; ++i) {
    ClickEvent e = random_event(rng);
    WindowConfig small = windows(0.005, 0.01);
    WindowConfig big = windows(0.05, 0.01);
    TrajectoryType a = classify_trajectory(e, small);
    TrajectoryType b = classify_trajectory(e, big);
    if (a == TrajectoryType::iConv) CHECK(b == TrajectoryType::iConv);
    if (a == TrajectoryType::iConv_iRefund) CHECK(b == TrajectoryType::iConv_iRefund);
    if (b == TrajectoryType::dConv) CHECK(a == TrajectoryType::dConv);
  }
}

TEST_CASE("invariant validation") {
  CHECK_THROWS(make_event(0.0, {}, 1.0).validate());
  CHECK_THROWS(make_event(1.0, 0.5).validate());
  CHECK_THROWS(make_event(0.0, 1.0, 0.5).validate());
  CHECK_NOTHROW(make_event(0.0, 1.0, 2.0).validate());
  WindowConfig bad = windows(0.0, 0.01);
  CHECK_THROWS(bad.validate());
  WindowConfig bad2 = windows(4.0, 0.01);  // obs > attr
  CHECK_THROWS(bad2.validate());
}
