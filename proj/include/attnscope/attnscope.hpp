// Copyright 2026 The attnscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "attnscope/augment.hpp"
#include "attnscope/common.hpp"
#include "attnscope/encoder.hpp"
#include "attnscope/geometry.hpp"
#include "attnscope/head.hpp"
#include "attnscope/io/image_io.hpp"
#include "attnscope/io/overlay.hpp"
#include "attnscope/io/run_config.hpp"
#include "attnscope/io/tensor_file.hpp"
#include "attnscope/io/weights_file.hpp"
#include "attnscope/localization.hpp"
#include "attnscope/pipeline.hpp"
#include "attnscope/region_scoring.hpp"
#include "attnscope/rollout.hpp"
