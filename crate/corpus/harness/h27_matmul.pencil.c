void matmul(int n, int A[const restrict static n][n], int B[const restrict static n][n], int C[const restrict static n][n])
{
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) {
      int acc = 0;
      for (int k = 0; k < n; k++)
        acc += A[i][k] * B[k][j];
      C[i][j] = acc;
    }
}
