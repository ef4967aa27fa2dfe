/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MIMOCE_MIMOCE_HPP
#define MIMOCE_MIMOCE_HPP

#include "mimoce/numerics.hpp"
#include "mimoce/pilots.hpp"
#include "mimoce/channel.hpp"
#include "mimoce/structure.hpp"
#include "mimoce/estimators.hpp"
#include "mimoce/cnn.hpp"
#include "mimoce/harness.hpp"

#endif  // MIMOCE_MIMOCE_HPP
