#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>

#include "gangsim/error.hpp"

namespace gangsim {

// GPU model label. Built-in labels are K80, P100 and V100; any other
// non-empty label is a user-defined class. The empty label means "no GPU"
// and is what CPU-only demands carry.
class GpuClass {
 public:
  GpuClass() = default;
  explicit GpuClass(std::string name) : name_(std::move(name)) {}

  static GpuClass K80() { return GpuClass("K80"); }
  static GpuClass P100() { return GpuClass("P100"); }
  static GpuClass V100() { return GpuClass("V100"); }

  const std::string& name() const noexcept { return name_; }
  bool empty() const noexcept { return name_.empty(); }
  bool is_builtin() const noexcept {
    return name_ == "K80" || name_ == "P100" || name_ == "V100";
  }

  friend auto operator<=>(const GpuClass&, const GpuClass&) = default;
  friend bool operator==(const GpuClass&, const GpuClass&) = default;

 private:
  std::string name_;
};

inline std::ostream& operator<<(std::ostream& os, const GpuClass& c) {
  return os << (c.empty() ? std::string("-") : c.name());
}

// Multi-dimensional capacity or demand. CPU is in millicores, memory in MB.
// Arithmetic is componentwise; the GPU class rides along and is checked by
// the placement code, not by the arithmetic.
struct ResourceVector {
  std::int64_t gpus = 0;
  GpuClass gpu_class;
  std::int64_t cpu_millis = 0;
  std::int64_t mem_mb = 0;

  static ResourceVector of_gpus(std::int64_t gpus, GpuClass cls = {},
                                std::int64_t cpu_millis = 0,
                                std::int64_t mem_mb = 0) {
    return ResourceVector{gpus, std::move(cls), cpu_millis, mem_mb};
  }

  bool is_zero() const noexcept { return gpus == 0 && cpu_millis == 0 && mem_mb == 0; }

  bool non_negative() const noexcept { return gpus >= 0 && cpu_millis >= 0 && mem_mb >= 0; }

  // Componentwise <=, ignoring the class label.
  bool fits_within(const ResourceVector& other) const noexcept {
    return gpus <= other.gpus && cpu_millis <= other.cpu_millis && mem_mb <= other.mem_mb;
  }

  ResourceVector& operator+=(const ResourceVector& rhs) noexcept {
    gpus += rhs.gpus;
    cpu_millis += rhs.cpu_millis;
    mem_mb += rhs.mem_mb;
    return *this;
  }

  // Throws UnderflowRelease when any component would go negative.
  ResourceVector& operator-=(const ResourceVector& rhs) {
    if (!rhs.fits_within(*this)) {
      throw Error(ErrorCode::UnderflowRelease, "resource subtraction would underflow");
    }
    gpus -= rhs.gpus;
    cpu_millis -= rhs.cpu_millis;
    mem_mb -= rhs.mem_mb;
    return *this;
  }

  ResourceVector scaled(std::int64_t k) const {
    return ResourceVector{gpus * k, gpu_class, cpu_millis * k, mem_mb * k};
  }

  // Componentwise minimum (keeps this vector's class).
  ResourceVector min_with(const ResourceVector& rhs) const {
    return ResourceVector{std::min(gpus, rhs.gpus), gpu_class,
                          std::min(cpu_millis, rhs.cpu_millis), std::min(mem_mb, rhs.mem_mb)};
  }

  // Class-insensitive equality of the numeric components.
  bool same_amounts(const ResourceVector& rhs) const noexcept {
    return gpus == rhs.gpus && cpu_millis == rhs.cpu_millis && mem_mb == rhs.mem_mb;
  }

  friend bool operator==(const ResourceVector&, const ResourceVector&) = default;
};

inline ResourceVector operator+(ResourceVector lhs, const ResourceVector& rhs) noexcept {
  lhs += rhs;
  return lhs;
}

inline ResourceVector operator-(ResourceVector lhs, const ResourceVector& rhs) {
  lhs -= rhs;
  return lhs;
}

inline std::ostream& operator<<(std::ostream& os, const ResourceVector& r) {
  return os << "{gpus=" << r.gpus << " " << r.gpu_class << " cpu=" << r.cpu_millis
            << "m mem=" << r.mem_mb << "MB}";
}

}  // namespace gangsim
