#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lloca/autodiff.hpp"
#include "lloca/frames.hpp"

namespace lloca {

enum class FrameConstructor { PD, GS4, SO3 };

FrameConstructor parse_frame_constructor(std::string_view name); // "pd" | "gs4" | "so3"
std::string to_string(FrameConstructor c);

/// Differentiable frame construction on batched rows: v0, v1, v2 of shape
/// (r,4) -> frames (r,16), row-major 4x4 per row. Forward values agree with
/// frame_pd / frame_gs4 / frame_so3. SO3 ignores v0.
/// Throws DomainError / DegenerateInput under the same conditions as the
/// single-frame constructors.
ad::Var build_frames(FrameConstructor c, ad::Var v0, ad::Var v1, ad::Var v2);

/// (r,16) rows of identity matrices.
ad::Tensor identity_frames(int rows);
ad::Tensor frames_to_tensor(std::span<const LorentzMatrix> frames);
LorentzMatrix frame_row(const ad::Tensor& frames, int row);

} // namespace lloca
