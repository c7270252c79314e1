#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "mmct/numerics.hpp"

namespace mmct {

/// One momentum-encoder key pair plus optional tag metadata.
struct QueueEntry {
    Vector intra_key;                // unit norm
    Vector inter_key;                // unit norm
    std::optional<Vector> tags;      // binary, image-side entries only
    std::int64_t source_id = -1;
};

/// Fixed-capacity FIFO of key features. Oldest entries are evicted first;
/// iteration order is insertion order.
class KeyQueue {
public:
    explicit KeyQueue(std::size_t capacity);

    /// Appends entries in order, evicting from the front to stay within
    /// capacity. Throws InvalidKey if a key is not unit-norm within 1e-10.
    void enqueue(std::span<const QueueEntry> batch);

    /// Copy of the current entries, oldest first. Independent of later
    /// mutations.
    std::vector<QueueEntry> snapshot() const;

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    void clear() { entries_.clear(); }

private:
    std::size_t capacity_;
    std::deque<QueueEntry> entries_;
};

} // namespace mmct
