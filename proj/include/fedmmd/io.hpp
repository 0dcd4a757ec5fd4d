#pragma once

#include <string>

#include "fedmmd/datagen.hpp"
#include "fedmmd/mlp.hpp"

namespace fedmmd {

// Checkpoint file (.ckpt), little-endian binary:
//   magic "FMCKPT01"
//   u32 slot_count, u32 split_slot
//   per slot: u32 name_len, name bytes, i32 rows, i32 cols
//   f64 data, flat, in slot order
void save_checkpoint(const std::string& path, const ModelWeights& w);
ModelWeights load_checkpoint(const std::string& path);

// Shard file (.shard), little-endian binary:
//   magic "FMSHRD01"
//   i32 client_id, i64 n, i32 dim, i32 n_classes
//   f64 features row-major, i32 labels
//   i64 train_count, i32 train indices, i64 test_count, i32 test indices
// A JSON sidecar (same path + ".json") records generator metadata.
void save_shard(const std::string& path, const ClientShard& shard,
                const std::string& metadata_json);
ClientShard load_shard(const std::string& path);

// Write-temp-then-rename so partially written artifacts are never observed.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

void append_line(const std::string& path, const std::string& line);

void ensure_dir(const std::string& path);

}  // namespace fedmmd
