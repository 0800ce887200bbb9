// Prints the alignment curves of the two circle labelings.

#include <cstdio>

#include "specalign/alignment.hpp"
#include "specalign/data_gen.hpp"

int main() {
    using namespace specalign;
    for (auto labeling : {CircleLabeling::major_axis, CircleLabeling::minor_axis}) {
        CircleSpec spec;
        spec.labeling = labeling;
        const Dataset d = circle_dataset(spec);
        const SvdResult svd = thin_svd(d.x);
        std::printf("%s labels, sigma = (%.4f, %.4f)\n",
                    labeling == CircleLabeling::major_axis ? "major-axis" : "minor-axis", svd.sigma(0), svd.sigma(1));
        const AlignmentCurve c = alignment_curve(svd, d.y);
        for (std::size_t i = 0; i < c.size(); ++i) std::printf("  tau %8.4f  alignment %9.4f\n", c.thresholds[i], c.values[i]);
    }
}
