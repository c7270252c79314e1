#include "mmct/queue.hpp"

#include <cmath>
#include <string>

namespace mmct {

namespace {

void check_unit(const Vector& key, const char* which, std::int64_t source_id) {
    const double n = l2_norm(key);
    if (std::abs(n - 1.0) > 1e-10) {
        throw InvalidKey(std::string("enqueue: ") + which + " of entry " +
                         std::to_string(source_id) + " has norm " + std::to_string(n));
    }
}

} // namespace

KeyQueue::KeyQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw InvalidDimension("KeyQueue: capacity must be positive");
    }
}

void KeyQueue::enqueue(std::span<const QueueEntry> batch) {
    for (const QueueEntry& e : batch) {
        check_unit(e.intra_key, "intra key", e.source_id);
        check_unit(e.inter_key, "inter key", e.source_id);
    }
    for (const QueueEntry& e : batch) {
        entries_.push_back(e);
        if (entries_.size() > capacity_) entries_.pop_front();
    }
}

std::vector<QueueEntry> KeyQueue::snapshot() const {
    return std::vector<QueueEntry>(entries_.begin(), entries_.end());
}

} // namespace mmct
