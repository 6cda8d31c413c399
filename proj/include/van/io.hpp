#pragma once

#include <string>

#include "van/tensor.hpp"
#include "van/van_model.hpp"
#include "van/variant.hpp"

namespace van {

// Checkpoint binary format, all multi-byte integers little-endian:
//   magic   4 bytes "VANW"
//   version u16 (currently 1)
//   count   u32 number of entries
//   entry   name (u32 length + UTF-8 bytes), dtype u8 (0=f32, 1=f64),
//           rank u8, extents u32 each, payload raw little-endian elements
// Entries appear in model traversal order and round-trip bit-exactly.
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ModelWeights<T>& model, const std::string& path);

// Validates magic (FormatError), version (VersionError), entry names, dtypes
// and shapes against the variant (IntegrityError, naming the first mismatch)
// and payload completeness (CorruptionError).
template <typename T>
ModelWeights<T> load_checkpoint(const std::string& path, const VanVariant& variant);

// JSON variant config. Exact schema, unknown keys rejected:
// {
//   "name": str, "stages": [{"channels", "depth", "expansion_ratio"} x4],
//   "lka_kernel": int, "lka_dilation": int, "num_classes": int,
//   "layerscale_init": number
// }
// Downsample geometry is fixed by convention (7/4/3 for stage 1, 3/2/1 after).
VanVariant parse_variant_config(const std::string& json_text);
VanVariant load_variant_config(const std::string& path);
std::string variant_config_to_json(const VanVariant& variant);

// Accepts a preset name (B0..B6, micro) or a path to a JSON config file.
VanVariant resolve_variant(const std::string& name_or_path);

// Binary PPM (P6, maxval 255) -> (1, 3, H, W). Pixel bytes map to [0,1] and
// are then normalized with fixed per-channel constants
// mean = (0.485, 0.456, 0.406), std = (0.229, 0.224, 0.225).
TensorF load_ppm_image(const std::string& path);

// Raw f32 tensor file: 16-byte header of four u32 little-endian extents
// (N, C, H, W) followed by the payload. Used as-is, no normalization.
TensorF load_raw_tensor(const std::string& path);
void save_raw_tensor(const TensorF& t, const std::string& path);

// Dispatch on extension: ".ppm" -> PPM, anything else -> raw tensor.
TensorF load_image_file(const std::string& path);

// Center-crop both spatial extents down to the nearest multiple of 32.
TensorF center_crop_to_multiple_of_32(const TensorF& image);

}  // namespace van
