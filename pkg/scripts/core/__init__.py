# pidsqueeze core: configuration, logging, exceptions and the physical model
