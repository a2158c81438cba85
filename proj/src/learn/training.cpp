#include "mbu/learn/training.hpp"

#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/rng.hpp"
#include "mbu/errors.hpp"

namespace mbu::learn {

dbn::ActionVec training_policy(std::size_t t, std::uint64_t seed, int action_width, const ProbeSchedule& schedule) {
  require(schedule.period > 0 && schedule.min_length >= 1 && schedule.min_length <= schedule.max_length &&
              schedule.offset + schedule.max_length <= schedule.period,
          "bad probe schedule");
  const std::size_t episode = t / schedule.period;
  const std::size_t pos = t % schedule.period;
  auto len_rng = dbn::Rng::substream(seed, "probe-length", episode);
  const std::size_t len = schedule.min_length + len_rng.below(schedule.max_length - schedule.min_length + 1);
  const bool probing = pos >= schedule.offset && pos < schedule.offset + len;

  auto bits = dbn::Rng::substream(seed, "probe-actions", t);
  std::uint32_t a = 0;
  for (int i = 0; i < action_width; ++i) {
    bool v = bits.coin();
    if (i == schedule.gate) v = probing;
    if (v) a |= 1u << i;
  }
  return dbn::ActionVec(a, action_width);
}

double mean_predictive(const dbn::History& h, const dbn::DbnProgram& model, std::size_t window) {
  require(window >= 1 && h.size() >= window, "history shorter than the maturity window");
  dbn::Filter f(model);
  double sum = 0.0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    const double p = f.predict(h[t].action)[h[t].obs.bits()];
    if (t + window >= h.size()) sum += p;
    if (p == 0.0) {
      // Remaining steps contribute nothing; the model cannot continue.
      return sum / static_cast<double>(window);
    }
    f.observe(h[t].action, h[t].obs);
  }
  return sum / static_cast<double>(window);
}

bool maturity_check(const dbn::History& h, const dbn::DbnProgram& model, std::size_t window, double threshold) {
  return mean_predictive(h, model, window) >= threshold;
}

}  // namespace mbu::learn
