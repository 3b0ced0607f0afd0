//! Shadow-dilation augmentation, the convolutional movement classifier, its training and
//! evaluation, and joint fine-tuning with the imitation networks.

mod augment;
mod cnn;
mod evaluate;
mod joint;
mod train;

pub use augment::{augment, augment_batch, reduce_replicas, AUGMENT_NOISE_STD, REPLICAS};
pub use cnn::{CnnArch, CnnCache, CnnModel, NUM_CLASSES};
pub use evaluate::{predict_labels, subject_accuracies, summarize_groups, GroupAccuracy, SubjectAccuracy};
pub use joint::{finetune_joint, joint_predict, JointConfig, JointRecord, JointSample};
pub use train::{train_cnn, CnnRecord, CnnTrainConfig, Labeled};
