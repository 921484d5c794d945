#pragma once

#include "hipart/common.hpp"

namespace hipart {

struct Camera {
  double fx = 1100.0, fy = 1100.0;
  double cx = 500.0, cy = 500.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // mm

  void validate() const;
};

// Pinhole projection of J x 3 world points (mm) to J x 2 pixels.
// Throws DomainError naming the first joint with nonpositive camera depth.
Mat project(const Mat& p3d, const Camera& cam);

// Camera looking at `target` from `eye`, world up +y.
Camera look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      double fx, double fy, double cx, double cy);

}  // namespace hipart
