// Copyright 2026 The TrajFlow Authors
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


#ifndef TRAJFLOW_TRAJFLOW_HPP
#define TRAJFLOW_TRAJFLOW_HPP

#include "trajflow/error.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/geometry.hpp"
#include "trajflow/guidance.hpp"
#include "trajflow/metrics.hpp"
#include "trajflow/nn/checkpoint.hpp"
#include "trajflow/nn/parameter_store.hpp"
#include "trajflow/nn/velocity_field.hpp"
#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/synthetic.hpp"
#include "trajflow/trajectory.hpp"

#endif  // TRAJFLOW_TRAJFLOW_HPP
