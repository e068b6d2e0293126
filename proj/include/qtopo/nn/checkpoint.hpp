#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qtopo/nn/network.hpp"

namespace qtopo::nn {

// Layout, little-endian: "QNN1", u32 version, u32 config length, config
// text, u32 layer count, one 48-byte entry per layer (u8 kind, u8
// activation, u16 zero, u32 kh kw sh sw cin cout, f64 rate, u64 parameter
// count), then every parameter tensor as f64 in layer order.
std::vector<std::uint8_t> serialize_checkpoint(Network& net);
Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace qtopo::nn
