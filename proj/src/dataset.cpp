#include "cfair/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "io_util.hpp"

namespace cfair {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_dataset(const EmbeddingDataset& ds) {
  if (ds.d == 0) throw ValidationError("embedding dimension d must be positive");
  if (ds.n == 0) throw ValidationError("dataset has no images");
  if (ds.k == 0) throw ValidationError("dataset has no identities");
  if (ds.attribute_names.empty())
    throw ValidationError("attribute set is empty (A must be >= 1)");
  if (ds.embeddings.size() != ds.n * ds.d)
    throw ValidationError("embedding matrix shape mismatch: expected " +
                          std::to_string(ds.n * ds.d) + " values, got " +
                          std::to_string(ds.embeddings.size()));
  if (ds.identity_of.size() != ds.n)
    throw ValidationError("identity labels shape mismatch");
  if (ds.attribute_of_identity.size() != ds.k)
    throw ValidationError("identity " + std::to_string(ds.attribute_of_identity.size()) +
                          " has no attribute (attribute_of_identity too short)");

  const std::size_t a = ds.attribute_names.size();
  for (std::size_t id = 0; id < ds.k; ++id) {
    if (ds.attribute_of_identity[id] >= a)
      throw ValidationError("identity " + std::to_string(id) +
                            ": attribute id out of range");
  }

  std::vector<char> referenced(ds.k, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (ds.identity_of[i] >= ds.k)
      throw ValidationError("image " + std::to_string(i) + ": identity id " +
                            std::to_string(ds.identity_of[i]) + " out of range");
    referenced[ds.identity_of[i]] = 1;
  }
  for (std::size_t id = 0; id < ds.k; ++id) {
    if (!referenced[id])
      throw ValidationError("identity " + std::to_string(id) + " unreferenced");
  }

  for (std::size_t i = 0; i < ds.n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < ds.d; ++j) {
      const double v = ds.embeddings[i * ds.d + j];
      if (!std::isfinite(v))
        throw ValidationError("non-finite embedding value at row " + std::to_string(i) +
                              ", column " + std::to_string(j));
      sq += v * v;
    }
    if (sq == 0.0)
      throw ValidationError("zero-norm embedding at row " + std::to_string(i));
  }
}

namespace {

constexpr const char* kBinName = "embeddings.bin";
constexpr const char* kManifestName = "manifest.json";
constexpr const char* kCsvName = "embeddings.csv";

EmbeddingDataset load_binary(const fs::path& dir) {
  const json manifest = io::read_json(dir / kManifestName);
  for (const char* field : {"n", "d", "k", "identities", "images", "attribute_names"}) {
    if (!manifest.contains(field))
      throw ValidationError(std::string("manifest missing field '") + field + "'");
  }

  EmbeddingDataset ds;
  ds.n = manifest.at("n").get<std::size_t>();
  ds.d = manifest.at("d").get<std::size_t>();
  ds.k = manifest.at("k").get<std::size_t>();
  ds.attribute_names = manifest.at("attribute_names").get<std::vector<std::string>>();

  ds.attribute_of_identity.assign(ds.k, 0);
  std::vector<char> identity_seen(ds.k, 0);
  for (const json& entry : manifest.at("identities")) {
    const auto id = entry.at("id").get<std::size_t>();
    if (id >= ds.k)
      throw ValidationError("manifest identities: id " + std::to_string(id) +
                            " out of range [0, " + std::to_string(ds.k) + ")");
    ds.attribute_of_identity[id] = entry.at("attribute").get<std::uint32_t>();
    identity_seen[id] = 1;
  }
  for (std::size_t id = 0; id < ds.k; ++id) {
    if (!identity_seen[id])
      throw ValidationError("identity " + std::to_string(id) +
                            " referenced without attribute in manifest");
  }

  ds.identity_of.assign(ds.n, 0);
  std::vector<char> row_seen(ds.n, 0);
  for (const json& entry : manifest.at("images")) {
    const auto row = entry.at("row").get<std::size_t>();
    if (row >= ds.n)
      throw ValidationError("manifest images: row " + std::to_string(row) +
                            " out of range [0, " + std::to_string(ds.n) + ")");
    if (row_seen[row])
      throw ValidationError("manifest images: duplicate row " + std::to_string(row));
    row_seen[row] = 1;
    ds.identity_of[row] = entry.at("identity").get<std::uint32_t>();
  }
  for (std::size_t row = 0; row < ds.n; ++row) {
    if (!row_seen[row])
      throw ValidationError("manifest images: row " + std::to_string(row) + " missing");
  }

  const std::vector<char> bytes = io::read_bytes(dir / kBinName);
  const std::size_t expected = ds.n * ds.d * sizeof(float);
  if (bytes.size() != expected)
    throw ValidationError(std::string(kBinName) + ": size " + std::to_string(bytes.size()) +
                          " does not match manifest shape (" + std::to_string(expected) +
                          " bytes)");
  if (manifest.contains("checksum")) {
    const auto declared = manifest.at("checksum").get<std::uint32_t>();
    const std::uint32_t actual = crc32(bytes.data(), bytes.size());
    if (declared != actual)
      throw ValidationError(std::string(kBinName) + ": checksum mismatch (manifest " +
                            std::to_string(declared) + ", file " + std::to_string(actual) + ")");
  }

  ds.embeddings.resize(ds.n * ds.d);
  const auto* values = reinterpret_cast<const float*>(bytes.data());
  for (std::size_t i = 0; i < ds.embeddings.size(); ++i) {
    ds.embeddings[i] = static_cast<double>(values[i]);
  }
  return ds;
}

EmbeddingDataset load_csv(const fs::path& file) {
  const std::vector<char> bytes = io::read_bytes(file);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));

  EmbeddingDataset ds;
  std::map<std::string, std::uint32_t> identity_ids;
  std::map<std::string, std::uint32_t> attribute_ids;

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string identity_name, attribute_name, cell;
    if (!std::getline(fields, identity_name, ',') ||
        !std::getline(fields, attribute_name, ','))
      throw ValidationError("csv row " + std::to_string(row) +
                            ": expected identity_name, attribute_name, values...");

    std::vector<double> values;
    while (std::getline(fields, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("csv row " + std::to_string(row) + ": bad value '" + cell + "'");
      }
    }
    if (values.empty())
      throw ValidationError("csv row " + std::to_string(row) + ": no embedding values");
    if (ds.d == 0) {
      ds.d = values.size();
    } else if (values.size() != ds.d) {
      throw ValidationError("csv row " + std::to_string(row) + ": expected " +
                            std::to_string(ds.d) + " values, got " +
                            std::to_string(values.size()));
    }

    auto [attr_it, attr_new] =
        attribute_ids.emplace(attribute_name, static_cast<std::uint32_t>(attribute_ids.size()));
    if (attr_new) ds.attribute_names.push_back(attribute_name);

    auto [id_it, id_new] =
        identity_ids.emplace(identity_name, static_cast<std::uint32_t>(identity_ids.size()));
    if (id_new) {
      ds.attribute_of_identity.push_back(attr_it->second);
    } else if (ds.attribute_of_identity[id_it->second] != attr_it->second) {
      throw ValidationError("csv row " + std::to_string(row) + ": identity '" + identity_name +
                            "' labeled with conflicting attributes");
    }

    ds.identity_of.push_back(id_it->second);
    ds.embeddings.insert(ds.embeddings.end(), values.begin(), values.end());
    ++row;
  }

  ds.n = row;
  ds.k = identity_ids.size();
  return ds;
}

}  // namespace

EmbeddingDataset load_dataset(const fs::path& dir) {
  EmbeddingDataset ds;
  if (fs::exists(dir / kManifestName)) {
    try {
      ds = load_binary(dir);
    } catch (const nlohmann::json::exception& err) {
      throw ValidationError(std::string(kManifestName) + ": " + err.what());
    }
  } else if (fs::exists(dir / kCsvName)) {
    ds = load_csv(dir / kCsvName);
  } else {
    throw ValidationError("no dataset found at " + dir.string() + " (expected " +
                          kManifestName + " or " + kCsvName + ")");
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const EmbeddingDataset& ds, const fs::path& dir) {
  validate_dataset(ds);
  fs::create_directories(dir);

  std::vector<float> values(ds.embeddings.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<float>(ds.embeddings[i]);
  }
  io::write_bytes_atomic(dir / kBinName, values.data(), values.size() * sizeof(float));

  json manifest;
  manifest["n"] = ds.n;
  manifest["d"] = ds.d;
  manifest["k"] = ds.k;
  manifest["attribute_names"] = ds.attribute_names;
  json identities = json::array();
  for (std::size_t id = 0; id < ds.k; ++id) {
    identities.push_back({{"id", id}, {"attribute", ds.attribute_of_identity[id]}});
  }
  manifest["identities"] = std::move(identities);
  json images = json::array();
  for (std::size_t row = 0; row < ds.n; ++row) {
    images.push_back({{"row", row}, {"identity", ds.identity_of[row]}});
  }
  manifest["images"] = std::move(images);
  manifest["checksum"] = crc32(values.data(), values.size() * sizeof(float));
  io::write_json_atomic(dir / kManifestName, manifest);
}

GroupIndex build_group_index(const EmbeddingDataset& ds) {
  GroupIndex gi;
  const std::size_t a = ds.attribute_count();
  gi.identities_of.resize(a);
  gi.images_of.resize(a);
  gi.images_per_identity.assign(ds.k, 0);

  for (std::uint32_t id = 0; id < ds.k; ++id) {
    gi.identities_of[ds.attribute_of_identity[id]].push_back(id);
  }
  for (std::uint32_t i = 0; i < ds.n; ++i) {
    gi.images_of[ds.attribute_of_image(i)].push_back(i);
    ++gi.images_per_identity[ds.identity_of[i]];
  }
  return gi;
}

}  // namespace cfair
