/*
 * Copyright 2026 The GradOPS Authors.
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

#include "gradops/aggregators.hpp"
#include "gradops/auc.hpp"
#include "gradops/dataset.hpp"
#include "gradops/deconflict.hpp"
#include "gradops/densecore.hpp"
#include "gradops/errors.hpp"
#include "gradops/evalmetrics.hpp"
#include "gradops/mtl_network.hpp"
#include "gradops/optim.hpp"
#include "gradops/reweight.hpp"
#include "gradops/toy2d.hpp"
#include "gradops/trainer.hpp"
