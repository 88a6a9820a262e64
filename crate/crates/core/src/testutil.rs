use crate::topology::Network;

pub(crate) fn tiny_network(gain: &[Vec<f64>], n_sub: usize) -> Network {
    Network::from_gain_matrix(gain, n_sub).unwrap()
}
