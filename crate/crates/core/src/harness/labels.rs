use super::SampleRecord;
use crate::geometry::{bbox_from_points, project, CameraIntrinsics, WireframeModel};
use crate::Error;

/// A record that could not be labeled.
#[derive(Debug)]
pub struct LabelReject {
    pub id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct LabelOutcome {
    pub records: Vec<SampleRecord>,
    pub rejects: Vec<LabelReject>,
}

/// Projects the wireframe through every ground-truth pose to fill in
/// `landmarks_gt` and `bbox_gt`. Records that cannot be labeled (behind the
/// camera, box outside the image) go to `rejects`; the rest keep their order.
pub fn generate_labels(records: &[SampleRecord], wireframe: &WireframeModel, cam: &CameraIntrinsics) -> LabelOutcome {
    let mut out = LabelOutcome::default();
    for r in records {
        let labeled = project(&r.pose_gt, cam, wireframe.keypoints()).and_then(|px| {
            let bbox = bbox_from_points(&px, cam)?;
            Ok((px, bbox))
        });
        match labeled {
            Ok((px, bbox)) => {
                let mut rec = r.clone();
                rec.landmarks_gt = Some(px);
                rec.bbox_gt = Some(bbox);
                out.records.push(rec);
            }
            Err(error) => out.rejects.push(LabelReject { id: r.id.clone(), error }),
        }
    }
    out
}
