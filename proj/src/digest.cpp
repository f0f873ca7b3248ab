#include "numcast/digest.hpp"

#include <openssl/sha.h>

#include <array>
#include <cstdio>

namespace numcast {

std::string sha1_hex(std::string_view bytes) {
  std::array<unsigned char, SHA_DIGEST_LENGTH> md{};
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md.data());
  std::string hex;
  hex.reserve(2 * md.size());
  for (unsigned char c : md) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", c);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1(std::string_view content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed.append(content);
  return sha1_hex(framed);
}

}  // namespace numcast
