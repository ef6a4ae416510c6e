#include "ldb/common.hpp"

#include <openssl/evp.h>

namespace ldb {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IoError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::InvalidRecipe: return "InvalidRecipe";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::MaterializationError: return "MaterializationError";
    case ErrorCode::ConstraintViolation: return "ConstraintViolation";
    case ErrorCode::CorruptTree: return "CorruptTree";
    case ErrorCode::PolicyMismatch: return "PolicyMismatch";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::DecodingError: return "DecodingError";
    case ErrorCode::AssemblyError: return "AssemblyError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NotHead: return "NotHead";
    case ErrorCode::SyncTargetImmutable: return "SyncTargetImmutable";
    case ErrorCode::NameTaken: return "NameTaken";
    case ErrorCode::MergeConflict: return "MergeConflict";
    case ErrorCode::IllegalSyncTopology: return "IllegalSyncTopology";
    case ErrorCode::NotBidirectionallyCompatible: return "NotBidirectionallyCompatible";
    case ErrorCode::DirectionUnavailable: return "DirectionUnavailable";
    case ErrorCode::ViewError: return "ViewError";
    case ErrorCode::RefusingToOverwrite: return "RefusingToOverwrite";
    case ErrorCode::Usage: return "UsageError";
  }
  return "Error";
}

ChunkId ChunkId::from_bytes(BytesView raw) {
  if (raw.size() != kSize) throw Error(ErrorCode::InvalidInput, "chunk id must be 32 bytes");
  std::array<std::uint8_t, kSize> b;
  std::memcpy(b.data(), raw.data(), kSize);
  return ChunkId(b);
}

ChunkId ChunkId::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kSize) throw Error(ErrorCode::InvalidInput, "chunk id must be 64 hex chars: " + std::string(hex));
  return from_bytes(ldb::from_hex(hex));
}

std::string ChunkId::hex() const { return to_hex(raw()); }

ChunkId sha256(BytesView data, std::uint8_t prefix) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error(ErrorCode::Io, "EVP_MD_CTX_new failed");
  std::array<std::uint8_t, ChunkId::kSize> out;
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, &prefix, 1) == 1 &&
                  EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, out.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != ChunkId::kSize) throw Error(ErrorCode::Io, "sha256 failed");
  return ChunkId(out);
}

ChunkId sha256(BytesView data) {
  std::array<std::uint8_t, ChunkId::kSize> out;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "sha256 failed");
  }
  return ChunkId(out);
}

std::string to_hex(BytesView bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0x0F]);
  }
  return out;
}

namespace {
int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::InvalidInput, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_digit(hex[i]);
    const int lo = hex_digit(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::InvalidInput, "bad hex digit in " + std::string(hex));
    out.push_back(static_cast<char>((hi << 4) | lo));
  }
  return out;
}

std::string escape_field(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\' || i + 1 == text.size()) {
      out.push_back(text[i]);
      continue;
    }
    switch (text[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(text[i]);
    }
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace ldb
