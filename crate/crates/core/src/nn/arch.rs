//! The two reference architectures.

use super::layer::{Activation, LayerSpec};

/// Convolutional net for 28x28 grayscale images: conv(32,3,1), conv(64,3,1),
/// 2x2 max-pool, flatten, dense(128), dense(classes).
///
/// With 10 classes this has 1,199,882 parameters (biases included). Without
/// the pooling stage the first dense layer alone would hold 4.7M.
pub fn image_net(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv2d(32, 3, 1, Activation::Relu),
        LayerSpec::conv2d(64, 3, 1, Activation::Relu),
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::dense(128, Activation::Relu),
        LayerSpec::dense(num_classes, Activation::Softmax),
    ]
}

/// Fully connected net: 64-32-16-8-classes.
///
/// Parameter count is `64 * inputs + 2808 + 9 * classes`; 3,594 for 12 inputs
/// and 2 classes.
pub fn tabular_net(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(64, Activation::Relu),
        LayerSpec::dense(32, Activation::Relu),
        LayerSpec::dense(16, Activation::Relu),
        LayerSpec::dense(8, Activation::Relu),
        LayerSpec::dense(num_classes, Activation::Softmax),
    ]
}
