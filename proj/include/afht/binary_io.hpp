#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace afht::binio {

// Little-endian primitive encoding, independent of host byte order.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, const std::string& s);  // u32 length + bytes

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is, std::size_t max_len = 1u << 26);

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace afht::binio
