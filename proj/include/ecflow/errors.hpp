// Copyright 2026 The ecflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ECFLOW_ERRORS_HPP_
#define ECFLOW_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ecflow {

enum class ErrorCode {
  // urdf
  kMalformedXml,
  kBranchingChain,
  kMissingLimit,
  kBadAxis,
  kUnsupportedJoint,
  kUnknownLink,
  kNotAncestor,
  kEmptyChain,
  // kinematics / camera
  kDimensionMismatch,
  kBehindCamera,
  kInvalidDepth,
  kOutOfImage,
  // diffusion
  kBadSteps,
  kBadTimestep,
  kShapeMismatch,
  kNonfiniteLoss,
  kEmptyDataset,
  kDivergedLoss,
  kHeaderMismatch,
  // solver
  kBadFrameIndex,
  kDegenerateStep,
  kBadHorizon,
  // dataset / files
  kCorruptManifest,
  kChecksumFail,
  kMissingInput,
  kFormatError,
  kIoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedXml: return "MalformedXml";
    case ErrorCode::kBranchingChain: return "BranchingChain";
    case ErrorCode::kMissingLimit: return "MissingLimit";
    case ErrorCode::kBadAxis: return "BadAxis";
    case ErrorCode::kUnsupportedJoint: return "UnsupportedJoint";
    case ErrorCode::kUnknownLink: return "UnknownLink";
    case ErrorCode::kNotAncestor: return "NotAncestor";
    case ErrorCode::kEmptyChain: return "EmptyChain";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInvalidDepth: return "InvalidDepth";
    case ErrorCode::kOutOfImage: return "OutOfImage";
    case ErrorCode::kBadSteps: return "BadSteps";
    case ErrorCode::kBadTimestep: return "BadTimestep";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonfiniteLoss: return "NonfiniteLoss";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kHeaderMismatch: return "HeaderMismatch";
    case ErrorCode::kBadFrameIndex: return "BadFrameIndex";
    case ErrorCode::kDegenerateStep: return "DegenerateStep";
    case ErrorCode::kBadHorizon: return "BadHorizon";
    case ErrorCode::kCorruptManifest: return "CorruptManifest";
    case ErrorCode::kChecksumFail: return "ChecksumFail";
    case ErrorCode::kMissingInput: return "MissingInput";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace ecflow

#endif  // ECFLOW_ERRORS_HPP_
