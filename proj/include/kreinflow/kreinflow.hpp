#pragma once

#include "core.hpp"
#include "enumeration.hpp"
#include "flow.hpp"
#include "instances.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "schatten.hpp"
#include "spectral.hpp"
