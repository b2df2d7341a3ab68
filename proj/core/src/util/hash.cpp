#include "plgmi/util/hash.hpp"

#include <openssl/evp.h>
#include <torch/torch.h>

#include <array>
#include <fstream>

#include "plgmi/error.hpp"

namespace plgmi::util {

struct Sha256::State {
  EVP_MD_CTX* ctx = nullptr;
  ~State() {
    if (ctx) EVP_MD_CTX_free(ctx);
  }
};

Sha256::Sha256() : state_(std::make_unique<State>()) {
  state_->ctx = EVP_MD_CTX_new();
  if (!state_->ctx || EVP_DigestInit_ex(state_->ctx, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kIo, "sha256: failed to initialise digest");
  }
}

Sha256::~Sha256() = default;
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;

Sha256& Sha256::update(std::span<const std::byte> bytes) {
  EVP_DigestUpdate(state_->ctx, bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(std::string_view text) {
  update(std::as_bytes(std::span(text.data(), text.size())));
  // Length suffix keeps ("ab","c") and ("a","bc") apart.
  return update(static_cast<std::int64_t>(text.size()));
}

Sha256& Sha256::update(std::int64_t value) {
  return update(std::as_bytes(std::span(&value, 1)));
}

Sha256& Sha256::update(const at::Tensor& tensor) {
  update(std::string_view(c10::toString(tensor.scalar_type())));
  for (auto d : tensor.sizes()) update(static_cast<std::int64_t>(d));
  auto contiguous = tensor.contiguous().cpu();
  auto* data = static_cast<const std::byte*>(contiguous.data_ptr());
  return update(std::span(data, contiguous.nbytes()));
}

std::string Sha256::hex() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  EVP_DigestFinal_ex(state_->ctx, digest.data(), &length);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  Sha256 h;
  h.update(std::as_bytes(std::span(text.data(), text.size())));
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buffer{};
  while (in) {
    in.read(buffer.data(), buffer.size());
    auto got = in.gcount();
    if (got > 0) h.update(std::as_bytes(std::span(buffer.data(), static_cast<std::size_t>(got))));
  }
  return h.hex();
}

}  // namespace plgmi::util
