#pragma once

// Little-endian scalar I/O over byte buffers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

namespace bdan::le {

template <class T>
T byteswap_if_big(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T>
void put(std::vector<unsigned char>& out, T v) {
    v = byteswap_if_big(v);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

/// Cursor over a byte buffer; `ok()` turns false on the first short read and
/// `offset()` then names where it happened.
class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

    template <class T>
    bool get(T& v) {
        if (pos_ + sizeof(T) > buf_.size()) return false;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        v = byteswap_if_big(v);
        pos_ += sizeof(T);
        return true;
    }

    bool bytes(std::size_t n, std::string& out) {
        if (pos_ + n > buf_.size()) return false;
        out.assign(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return true;
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace bdan::le
