#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mqmc::bank {

/// Fixed-capacity FIFO. Index 0 is the oldest element; pushing into a full
/// buffer evicts and returns the oldest.
template <typename T>
class RingBuffer {
public:
    explicit RingBuffer(std::size_t capacity) : slots_(capacity) {
        if (capacity == 0) throw std::invalid_argument("RingBuffer: capacity must be positive");
    }

    std::size_t capacity() const { return slots_.size(); }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    bool full() const { return size_ == slots_.size(); }

    std::optional<T> push_back(T value) {
        std::optional<T> evicted;
        if (full()) evicted = pop_front();
        slots_[(head_ + size_) % slots_.size()] = std::move(value);
        ++size_;
        return evicted;
    }

    T pop_front() {
        if (empty()) throw std::out_of_range("RingBuffer: pop from empty buffer");
        T out = std::move(slots_[head_]);
        head_ = (head_ + 1) % slots_.size();
        --size_;
        return out;
    }

    /// Removes the element at logical position i, keeping the order of the rest.
    T erase(std::size_t i) {
        if (i >= size_) throw std::out_of_range("RingBuffer: erase past end");
        if (i == 0) return pop_front();
        T out = std::move((*this)[i]);
        for (std::size_t k = i; k + 1 < size_; ++k) (*this)[k] = std::move((*this)[k + 1]);
        --size_;
        return out;
    }

    T& operator[](std::size_t i) { return slots_[(head_ + i) % slots_.size()]; }
    const T& operator[](std::size_t i) const { return slots_[(head_ + i) % slots_.size()]; }

    void clear() {
        head_ = 0;
        size_ = 0;
    }

private:
    std::vector<T> slots_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
};

}  // namespace mqmc::bank
