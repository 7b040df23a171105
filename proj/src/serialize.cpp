#include "automac/serialize.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "automac/errors.hpp"

namespace automac {

namespace {

struct DtypeEntry {
  const char* name;
  torch::ScalarType type;
  std::size_t size;
};

constexpr DtypeEntry kDtypes[] = {
    {"f32", torch::kFloat32, 4}, {"f64", torch::kFloat64, 8}, {"i64", torch::kInt64, 8},
    {"i32", torch::kInt32, 4},   {"u8", torch::kUInt8, 1},
};

const DtypeEntry& dtype_by_type(torch::ScalarType t) {
  for (const auto& e : kDtypes) {
    if (e.type == t) return e;
  }
  throw ValidationError("unsupported tensor dtype in archive: " +
                        std::string(torch::toString(t)));
}

const DtypeEntry& dtype_by_name(const std::string& name) {
  for (const auto& e : kDtypes) {
    if (name == e.name) return e;
  }
  throw DataError("unknown dtype tag in archive header: " + name);
}

void write_exact(std::ofstream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_exact(std::ifstream& is, void* data, std::size_t n, const std::string& path) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw DataError("truncated archive: " + path);
  }
}

}  // namespace

void save_tensor_archive(const std::string& path, const std::string& magic,
                         const nlohmann::json& meta,
                         const std::map<std::string, torch::Tensor>& tensors) {
  if (magic.size() != 4) throw ValidationError("archive magic must be 4 bytes");

  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::vector<torch::Tensor> flat;
  flat.reserve(tensors.size());
  for (const auto& [name, tensor] : tensors) {
    torch::Tensor t = tensor.detach().cpu().contiguous();
    const auto& dt = dtype_by_type(t.scalar_type());
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * dt.size;
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = dt.name;
    entry["shape"] = std::vector<std::int64_t>(t.sizes().begin(), t.sizes().end());
    entry["offset"] = offset;
    entry["nbytes"] = nbytes;
    index.push_back(std::move(entry));
    flat.push_back(std::move(t));
    offset += nbytes;
  }

  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = std::move(index);
  const std::string header_bytes = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  write_exact(os, magic.data(), 4);
  const std::uint32_t version = kArchiveVersion;
  write_exact(os, &version, 4);
  const std::uint64_t header_len = header_bytes.size();
  write_exact(os, &header_len, 8);
  write_exact(os, header_bytes.data(), header_bytes.size());
  for (const auto& t : flat) {
    write_exact(os, t.const_data_ptr(), static_cast<std::size_t>(t.numel()) *
                                            dtype_by_type(t.scalar_type()).size);
  }
  if (!os) throw DataError("write failed: " + path);
}

TensorArchive load_tensor_archive(const std::string& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open archive: " + path);

  char got_magic[4];
  read_exact(is, got_magic, 4, path);
  if (std::memcmp(got_magic, magic.data(), 4) != 0) {
    throw ContractError("archive " + path + " is not a '" + magic + "' file");
  }
  std::uint32_t version = 0;
  read_exact(is, &version, 4, path);
  if (version != kArchiveVersion) {
    throw DataError("unsupported archive version " + std::to_string(version) + ": " + path);
  }
  std::uint64_t header_len = 0;
  read_exact(is, &header_len, 8, path);
  if (header_len > (1ull << 30)) throw DataError("implausible archive header size: " + path);
  std::string header_bytes(header_len, '\0');
  read_exact(is, header_bytes.data(), header_len, path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt archive header in " + path + ": " + e.what());
  }

  TensorArchive archive;
  archive.meta = header.value("meta", nlohmann::json::object());
  std::uint64_t expected_offset = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto& dt = dtype_by_name(entry.at("dtype").get<std::string>());
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
      throw DataError("non-sequential tensor layout in " + path);
    }
    expected_offset += nbytes;

    torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dt.type));
    if (static_cast<std::uint64_t>(t.numel()) * dt.size != nbytes) {
      throw DataError("tensor size mismatch for '" + name + "' in " + path);
    }
    read_exact(is, t.data_ptr(), nbytes, path);
    archive.tensors.emplace(name, std::move(t));
  }
  return archive;
}

}  // namespace automac
