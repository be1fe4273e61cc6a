/*
 * Copyright 2026 The Tailcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "tailcast/autodiff.hpp"
#include "tailcast/bundle.hpp"
#include "tailcast/error.hpp"
#include "tailcast/eval.hpp"
#include "tailcast/infer.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/labeling.hpp"
#include "tailcast/model.hpp"
#include "tailcast/pipeline.hpp"
#include "tailcast/rng.hpp"
#include "tailcast/synth.hpp"
#include "tailcast/train.hpp"
