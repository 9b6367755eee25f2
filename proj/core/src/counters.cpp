#include "xpolicy/encoder.hpp"

namespace xpolicy {
namespace detail_counters {
std::atomic<uint64_t> g_empty_prompt{0};
}

uint64_t empty_prompt_passthrough_count() { return detail_counters::g_empty_prompt.load(); }
void reset_empty_prompt_passthrough_count() { detail_counters::g_empty_prompt.store(0); }

}  // namespace xpolicy
