#pragma once

// Checkpoint container: magic "DSAT", u32 LE format version, then a table of
// named arrays (u16 LE name length, UTF-8 name, u8 rank, u32 LE dims, f32 LE
// data), closed by a CRC32 of everything after the 8-byte header.

#include "dstok/optim.hpp"
#include "dstok/tensor.hpp"

#include <string>
#include <vector>

namespace dstok {

using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

uint32_t crc32_ieee(const uint8_t * data, size_t len, uint32_t seed = 0);

// atomic: writes a temp file in the target directory and renames it in place
void save_checkpoint(const std::string & path, const NamedArrays & arrays);
NamedArrays load_checkpoint(const std::string & path);

// copy arrays into an existing ParamMap by name; every map entry must be
// present with a matching shape
void load_into_params(const NamedArrays & arrays, ParamMap & params);

// raw 64-bit words carried through the f32 array format bit-exactly
Tensor pack_u64_words(const std::vector<uint64_t> & words);
std::vector<uint64_t> unpack_u64_words(const Tensor & t);

const Tensor * find_array(const NamedArrays & arrays, const std::string & name);

} // namespace dstok
