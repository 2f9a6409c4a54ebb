#include "vala/numerics/kink.hpp"

namespace vala::kink {

namespace {

struct State {
  bool active = false;
  std::uint64_t hash = 0;
};

thread_local State g_state;

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

bool active() { return g_state.active; }

void record(Site site, std::uint64_t branch) {
  g_state.hash = mix(g_state.hash ^ (static_cast<std::uint64_t>(site) << 56) ^ branch) +
                 0x9e3779b97f4a7c15ULL;
}

Monitor::Monitor() : previous_active_(g_state.active), previous_hash_(g_state.hash) {
  g_state.active = true;
  g_state.hash = 0;
}

Monitor::~Monitor() {
  g_state.active = previous_active_;
  g_state.hash = previous_hash_;
}

std::uint64_t Monitor::signature() const { return g_state.hash; }

void Monitor::reset() { g_state.hash = 0; }

}  // namespace vala::kink
