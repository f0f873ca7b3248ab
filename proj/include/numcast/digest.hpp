#pragma once

#include <string>
#include <string_view>

namespace numcast {

/// Lower-case hex SHA-1 of `bytes`.
std::string sha1_hex(std::string_view bytes);

/// Git object id of a blob with this content: SHA-1 of "blob <size>\0" + content.
std::string git_blob_sha1(std::string_view content);

}  // namespace numcast
