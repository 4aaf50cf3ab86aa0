void row_sums(int n, int M[const restrict static n][n], int r[const restrict static n])
{
  for (int i = 0; i < n; i++) {
    int s = 0;
#pragma pencil reduction (+:s)
    for (int j = 0; j < n; j++)
      s += M[i][j];
    r[i] = s;
  }
}
