#pragma once

// Checkpoint format, bit-exact on round trip:
//   bytes 0..7   magic "MDMLABWT"
//   byte  8      format version (0x01)
//   bytes 9..12  header length, uint32 little-endian
//   header       canonical-order JSON: config, tensor manifest
//                (name/rows/cols/offset), payload byte count
//   payload      tensors in manifest order, row-major float32 little-endian
//   trailer      CRC32 of the payload, uint32 little-endian

#include <mdmlab/model.hpp>

#include <cstdint>
#include <string>

namespace mdmlab {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

void save_weights(Weights<float>& weights, const std::string& path);
Weights<float> load_weights(const std::string& path);

}  // namespace mdmlab
