# Core package: fields, norms, actions and balls
