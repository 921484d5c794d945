#include "hipart/camera.hpp"

namespace hipart {

void Camera::validate() const {
  if (fx <= 0 || fy <= 0) throw DomainError("focal lengths must be positive");
  Eigen::Matrix3d should_be_id = rotation * rotation.transpose();
  if ((should_be_id - Eigen::Matrix3d::Identity()).norm() > 1e-9)
    throw DomainError("camera rotation is not orthonormal");
  if (rotation.determinant() < 0) throw DomainError("camera rotation has negative determinant");
}

Mat project(const Mat& p3d, const Camera& cam) {
  Mat out(p3d.rows(), 2);
  for (int j = 0; j < p3d.rows(); ++j) {
    Eigen::Vector3d pc = cam.rotation * p3d.row(j).transpose() + cam.translation;
    if (pc.z() <= 0.0)
      throw DomainError("nonpositive camera depth at joint " + std::to_string(j));
    out(j, 0) = cam.fx * pc.x() / pc.z() + cam.cx;
    out(j, 1) = cam.fy * pc.y() / pc.z() + cam.cy;
  }
  return out;
}

Camera look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      double fx, double fy, double cx, double cy) {
  Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d up(0, 1, 0);
  if (std::abs(fwd.dot(up)) > 0.999) up = Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d right = fwd.cross(up).normalized();
  Eigen::Vector3d down = fwd.cross(right).normalized();  // image y grows downward

  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = fwd.transpose();
  cam.translation = -cam.rotation * eye;
  cam.validate();
  return cam;
}

}  // namespace hipart
