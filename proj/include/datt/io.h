// Small file helpers shared by the feature, checkpoint and report writers.

#ifndef DATT_IO_H_
#define DATT_IO_H_

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace datt {

// Whole-file read; InputError if the file cannot be opened.
std::string ReadFile(const std::string& path);

// Writes to "<path>.tmp.<pid>" and renames over path, so readers never see a
// partially written file and a failed write leaves nothing behind.
void WriteFileAtomic(const std::string& path, std::string_view bytes);

// Little-endian scalar packing. The build targets little-endian hosts only
// (checked in io.cc), so these are plain copies.
template <typename T>
void AppendLe(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T LoadLe(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

}  // namespace datt

#endif  // DATT_IO_H_
