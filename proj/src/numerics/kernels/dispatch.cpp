#include <atomic>
#include <cstdlib>

#include "rsfiqa/numerics/kernels.hpp"

namespace rsfiqa::kernels {
namespace {

const KernelSet* find(std::string_view name) {
  for (const KernelSet* set : available_kernels()) {
    if (set->name == name) return set;
  }
  return nullptr;
}

const KernelSet* initial() {
  if (const char* env = std::getenv("RSFIQA_KERNELS")) {
    if (const KernelSet* set = find(env)) return set;
  }
  const auto sets = available_kernels();
  return sets.back();
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> set{initial()};
  return set;
}

}  // namespace

std::vector<const KernelSet*> available_kernels() {
  std::vector<const KernelSet*> sets{&scalar_kernels()};
  if (const KernelSet* s = avx2_kernels()) sets.push_back(s);
  if (const KernelSet* s = neon_kernels()) sets.push_back(s);
  return sets;
}

const KernelSet& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) noexcept {
  const KernelSet* set = find(name);
  if (set == nullptr) return false;
  current().store(set, std::memory_order_relaxed);
  return true;
}

}  // namespace rsfiqa::kernels
