#pragma once

#include "seamless/assess.hpp"
#include "seamless/bba.hpp"
#include "seamless/coregister.hpp"
#include "seamless/error.hpp"
#include "seamless/fusion.hpp"
#include "seamless/geocore.hpp"
#include "seamless/io.hpp"
#include "seamless/markergeoref.hpp"
#include "seamless/pointcloud.hpp"
#include "seamless/random.hpp"
#include "seamless/raster.hpp"
#include "seamless/sgm.hpp"
#include "seamless/synth.hpp"
