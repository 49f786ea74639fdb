#include "mkvb/random.hpp"

namespace mkvb {

std::uint64_t RandomnessSource::key(std::uint64_t replica, const Label& k,
                                    StreamPurpose purpose) const noexcept {
  std::uint64_t h = mix64(seed_ ^ 0x5851f42d4c957f2dULL);
  h = mix64(h ^ replica);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  // Length first so that words of different depth never collide trivially.
  h = mix64(h ^ k.depth());
  for (auto v : k.word()) h = mix64(h ^ v);
  return h;
}

}  // namespace mkvb
