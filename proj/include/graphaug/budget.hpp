#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include "graphaug/errors.hpp"

namespace graphaug {

// Byte accounting for the configurable memory budget. Tensor storage and
// per-cell dataset copies are charged here; exceeding the cap raises
// MemoryBudgetExceeded, which the experiment grid records as an OOM cell
// instead of crashing. Single-threaded by contract.
class MemoryBudget {
  public:
    static MemoryBudget& instance() {
        static thread_local MemoryBudget b;
        return b;
    }

    void charge(std::size_t bytes) {
        if (cap_ != 0 && live_ + bytes > baseline_ + cap_) {
            throw MemoryBudgetExceeded(
                "memory budget exceeded: " + std::to_string(live_ + bytes - baseline_) +
                " bytes requested against a cap of " + std::to_string(cap_));
        }
        live_ += bytes;
        peak_ = std::max(peak_, live_);
    }

    void release(std::size_t bytes) { live_ = bytes > live_ ? 0 : live_ - bytes; }

    std::size_t live() const { return live_; }
    std::size_t peak() const { return peak_; }

  private:
    friend class BudgetScope;
    std::size_t live_ = 0;
    std::size_t peak_ = 0;
    std::size_t cap_ = 0;       // 0 = unlimited
    std::size_t baseline_ = 0;  // live bytes when the active scope was entered
};

// RAII scope that arms the cap and measures the peak usage of the region.
class BudgetScope {
  public:
    explicit BudgetScope(std::size_t cap_bytes) {
        auto& b = MemoryBudget::instance();
        saved_cap_ = b.cap_;
        saved_baseline_ = b.baseline_;
        saved_peak_ = b.peak_;
        b.cap_ = cap_bytes;
        b.baseline_ = b.live_;
        b.peak_ = b.live_;
        entry_live_ = b.live_;
    }

    BudgetScope(const BudgetScope&) = delete;
    BudgetScope& operator=(const BudgetScope&) = delete;

    ~BudgetScope() {
        auto& b = MemoryBudget::instance();
        b.cap_ = saved_cap_;
        b.baseline_ = saved_baseline_;
        b.peak_ = std::max(saved_peak_, b.peak_);
    }

    // Peak bytes allocated beyond what was live at scope entry.
    std::size_t scope_peak() const {
        auto& b = MemoryBudget::instance();
        return b.peak_ > entry_live_ ? b.peak_ - entry_live_ : 0;
    }

  private:
    std::size_t saved_cap_;
    std::size_t saved_baseline_;
    std::size_t saved_peak_;
    std::size_t entry_live_;
};

// Explicit charge with RAII release, for non-tensor allocations that should
// count against the budget (per-cell training set copies).
class ChargedBytes {
  public:
    explicit ChargedBytes(std::size_t bytes) : bytes_(bytes) {
        MemoryBudget::instance().charge(bytes_);
    }
    ChargedBytes(const ChargedBytes&) = delete;
    ChargedBytes& operator=(const ChargedBytes&) = delete;
    ~ChargedBytes() { MemoryBudget::instance().release(bytes_); }

  private:
    std::size_t bytes_;
};

}  // namespace graphaug
