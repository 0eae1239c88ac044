#pragma once

// Wire frames: "KGD1" | type u8 | k u64le | dim u16le | dim × f64le.

#include "kernelguard/attacks.hpp"
#include "kernelguard/types.hpp"

#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kernelguard {

enum class MsgType : std::uint8_t { y = 0x01, u = 0x02, r_en = 0x03, r0p = 0x04, beta = 0x05, gamma = 0x06, v = 0x07 };

struct Frame {
    MsgType type = MsgType::y;
    std::uint64_t k = 0;
    Vector payload;

    bool operator==(const Frame& o) const {
        if (type != o.type || k != o.k || payload.size() != o.payload.size()) return false;
        return payload.size() == 0 ||
               std::memcmp(payload.data(), o.payload.data(), sizeof(double) * static_cast<std::size_t>(payload.size())) == 0;
    }
};

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t frame_header_size = 15;

inline std::size_t frame_size(std::size_t dim) { return frame_header_size + 8 * dim; }

inline std::optional<Channel> channel_of(MsgType t) {
    switch (t) {
        case MsgType::y: return Channel::y;
        case MsgType::u: return Channel::u;
        case MsgType::r_en: return Channel::r_en;
        case MsgType::r0p: return Channel::r0;
        case MsgType::beta: return Channel::beta;
        case MsgType::gamma: return Channel::gamma;
        case MsgType::v: return std::nullopt;
    }
    return std::nullopt;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t x, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t x = 0;
    for (int i = 0; i < bytes; ++i) x |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return x;
}

}  // namespace detail

inline void encode_frame(const Frame& f, std::vector<std::uint8_t>& out) {
    if (f.payload.size() > 0xFFFF) throw std::length_error("frame payload exceeds 65535 values");
    out.insert(out.end(), {'K', 'G', 'D', '1'});
    out.push_back(static_cast<std::uint8_t>(f.type));
    detail::put_le(out, f.k, 8);
    detail::put_le(out, static_cast<std::uint64_t>(f.payload.size()), 2);
    for (Eigen::Index i = 0; i < f.payload.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &f.payload(i), 8);
        detail::put_le(out, bits, 8);
    }
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
    std::vector<std::uint8_t> out;
    out.reserve(frame_size(static_cast<std::size_t>(f.payload.size())));
    encode_frame(f, out);
    return out;
}

/// Decodes one frame from the front of `data`; `consumed` receives its length.
inline Frame decode_frame(const std::uint8_t* data, std::size_t size, std::size_t* consumed = nullptr) {
    if (size < frame_header_size) throw DecodeError("truncated frame header (" + std::to_string(size) + " bytes)");
    if (std::memcmp(data, "KGD1", 4) != 0) throw DecodeError("bad frame magic");
    const std::uint8_t type = data[4];
    if (type < 0x01 || type > 0x07) throw DecodeError("unknown message type " + std::to_string(type));
    Frame f;
    f.type = static_cast<MsgType>(type);
    f.k = detail::get_le(data + 5, 8);
    const auto dim = static_cast<std::size_t>(detail::get_le(data + 13, 2));
    if (size < frame_size(dim))
        throw DecodeError("truncated payload: dim " + std::to_string(dim) + " needs " + std::to_string(frame_size(dim)) +
                          " bytes, have " + std::to_string(size));
    f.payload.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        const std::uint64_t bits = detail::get_le(data + frame_header_size + 8 * i, 8);
        std::memcpy(&f.payload(static_cast<Eigen::Index>(i)), &bits, 8);
    }
    if (consumed) *consumed = frame_size(dim);
    return f;
}

/// Whole-buffer decode; trailing bytes are an error.
inline Frame decode_frame(const std::vector<std::uint8_t>& bytes) {
    std::size_t used = 0;
    Frame f = decode_frame(bytes.data(), bytes.size(), &used);
    if (used != bytes.size())
        throw DecodeError("dim mismatch: frame declares " + std::to_string(used) + " bytes, buffer has " +
                          std::to_string(bytes.size()));
    return f;
}

}  // namespace kernelguard
