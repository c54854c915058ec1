// Copyright 2026 The facelink Authors
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

#pragma once

#include "facelink/codec.hpp"
#include "facelink/config.hpp"
#include "facelink/error.hpp"
#include "facelink/harness.hpp"
#include "facelink/matrix.hpp"
#include "facelink/pipeline.hpp"
#include "facelink/predictor.hpp"
#include "facelink/render.hpp"
#include "facelink/selector.hpp"
#include "facelink/trace.hpp"
